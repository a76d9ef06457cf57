#include "medusa/fusion_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medusa/errors.hpp"

namespace medusa {

using nlohmann::json;

bool GraphSchema::has_type(const std::string& id) const {
  return std::any_of(types.begin(), types.end(), [&](const TypeInfo& t) { return t.id == id; });
}

const GraphSchema::TypeInfo& GraphSchema::type(const std::string& id) const {
  for (const auto& t : types)
    if (t.id == id) return t;
  throw ValidationError("unknown object type: " + id);
}

bool GraphSchema::has_edge(const std::string& edge_id) const {
  return std::any_of(relations.begin(), relations.end(),
                     [&](const EdgeInfo& e) { return e.edge_id == edge_id; });
}

const GraphSchema::EdgeInfo& GraphSchema::edge(const std::string& edge_id) const {
  for (const auto& e : relations)
    if (e.edge_id == edge_id) return e;
  throw ValidationError("unknown relation: " + edge_id);
}

Index GraphSchema::label_index(const std::string& type_id, const std::string& label) const {
  const auto& t = type(type_id);
  for (std::size_t i = 0; i < t.labels.size(); ++i)
    if (t.labels[i] == label) return static_cast<Index>(i);
  return -1;
}

FusionGraph::FusionGraph(std::vector<ObjectType> types, std::vector<RelationMatrix> relations,
                         std::vector<ConstraintMatrix> constraints)
    : types_(std::move(types)), relations_(std::move(relations)), constraints_(std::move(constraints)) {
  for (std::size_t i = 0; i < types_.size(); ++i)
    if (!type_index_.emplace(types_[i].id, i).second)
      throw ValidationError("duplicate object type: " + types_[i].id);
  for (std::size_t i = 0; i < relations_.size(); ++i)
    if (!relation_index_.emplace(relations_[i].edge_id, i).second)
      throw ValidationError("duplicate edge_id: " + relations_[i].edge_id);
  std::set<std::string> constraint_ids;
  for (const auto& c : constraints_)
    if (!constraint_ids.insert(c.constraint_id).second)
      throw ValidationError("duplicate constraint_id: " + c.constraint_id);
  validate();
}

void FusionGraph::validate() const {
  if (types_.empty()) throw ValidationError("graph has no object types");
  for (const auto& r : relations_) {
    if (!has_type(r.source))
      throw ValidationError("relation " + r.edge_id + " references unknown type " + r.source);
    if (!has_type(r.target))
      throw ValidationError("relation " + r.edge_id + " references unknown type " + r.target);
    if (r.values.rows() != type(r.source).size() || r.values.cols() != type(r.target).size()) {
      std::ostringstream msg;
      msg << "shape mismatch in relation " << r.edge_id << ": matrix is " << r.values.rows() << "x"
          << r.values.cols() << " but types demand " << type(r.source).size() << "x"
          << type(r.target).size();
      throw ValidationError(msg.str());
    }
    for (Index k = 0; k < r.values.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(r.values, k); it; ++it)
        if (!std::isfinite(it.value()))
          throw ValidationError("non-finite entry in relation " + r.edge_id + " at (" +
                                std::to_string(it.row()) + "," + std::to_string(it.col()) + ")");
  }
  for (const auto& c : constraints_) {
    if (!has_type(c.type))
      throw ValidationError("constraint " + c.constraint_id + " references unknown type " + c.type);
    if (c.values.rows() != type(c.type).size() || c.values.cols() != type(c.type).size())
      throw ValidationError("shape mismatch in constraint " + c.constraint_id + ": must be square of size " +
                            std::to_string(type(c.type).size()));
    for (Index k = 0; k < c.values.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(c.values, k); it; ++it)
        if (!std::isfinite(it.value()))
          throw ValidationError("non-finite entry in constraint " + c.constraint_id);
  }

  // Relations must connect all types into a single component.
  if (types_.size() > 1) {
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& r : relations_) {
      adjacency[r.source].push_back(r.target);
      adjacency[r.target].push_back(r.source);
    }
    std::set<std::string> seen{types_.front().id};
    std::queue<std::string> frontier;
    frontier.push(types_.front().id);
    while (!frontier.empty()) {
      const std::string current = frontier.front();
      frontier.pop();
      for (const auto& next : adjacency[current])
        if (seen.insert(next).second) frontier.push(next);
    }
    if (seen.size() != types_.size()) {
      std::string unreachable;
      for (const auto& t : types_)
        if (!seen.count(t.id)) unreachable += (unreachable.empty() ? "" : ", ") + t.id;
      throw ValidationError("disconnected graph: no relation path reaches type(s) " + unreachable);
    }
  }
}

bool FusionGraph::has_type(const std::string& id) const { return type_index_.count(id) > 0; }

const ObjectType& FusionGraph::type(const std::string& id) const {
  auto it = type_index_.find(id);
  if (it == type_index_.end()) throw ValidationError("unknown object type: " + id);
  return types_[it->second];
}

const RelationMatrix& FusionGraph::relation(const std::string& edge_id) const {
  auto it = relation_index_.find(edge_id);
  if (it == relation_index_.end()) throw ValidationError("unknown relation: " + edge_id);
  return relations_[it->second];
}

std::vector<const RelationMatrix*> FusionGraph::relations_with(const std::string& type_id) const {
  std::vector<const RelationMatrix*> out;
  for (const auto& r : relations_)
    if (r.source == type_id || r.target == type_id) out.push_back(&r);
  return out;
}

std::vector<const ConstraintMatrix*> FusionGraph::constraints_on(const std::string& type_id) const {
  std::vector<const ConstraintMatrix*> out;
  for (const auto& c : constraints_)
    if (c.type == type_id) out.push_back(&c);
  return out;
}

GraphSchema FusionGraph::schema() const {
  GraphSchema s;
  for (const auto& t : types_) s.types.push_back({t.id, t.labels});
  for (const auto& r : relations_) s.relations.push_back({r.edge_id, r.source, r.target});
  return s;
}

FusionGraph FusionGraph::load(const std::filesystem::path& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw ValidationError("missing file: " + manifest_file.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError("bad manifest " + manifest_file.string() + ": " + e.what());
  }
  const std::filesystem::path base = manifest_file.parent_path();
  auto resolve = [&](const std::string& p) { return base / p; };

  std::vector<ObjectType> types;
  for (const auto& t : manifest.value("types", json::array())) {
    if (!t.contains("id") || !t.contains("labels_file"))
      throw ValidationError("manifest type entry needs id and labels_file");
    types.push_back({t["id"].get<std::string>(),
                     read_labels(resolve(t["labels_file"].get<std::string>()))});
  }
  std::vector<RelationMatrix> relations;
  for (const auto& r : manifest.value("relations", json::array())) {
    if (!r.contains("edge_id") || !r.contains("source") || !r.contains("target") ||
        !r.contains("matrix_file"))
      throw ValidationError("manifest relation entry needs edge_id, source, target, matrix_file");
    relations.push_back({r["edge_id"].get<std::string>(), r["source"].get<std::string>(),
                         r["target"].get<std::string>(),
                         read_coo(resolve(r["matrix_file"].get<std::string>()))});
  }
  std::vector<ConstraintMatrix> constraints;
  for (const auto& c : manifest.value("constraints", json::array())) {
    if (!c.contains("constraint_id") || !c.contains("type") || !c.contains("matrix_file"))
      throw ValidationError("manifest constraint entry needs constraint_id, type, matrix_file");
    constraints.push_back({c["constraint_id"].get<std::string>(), c["type"].get<std::string>(),
                           read_coo(resolve(c["matrix_file"].get<std::string>()))});
  }
  return FusionGraph(std::move(types), std::move(relations), std::move(constraints));
}

void FusionGraph::save(const std::filesystem::path& directory) const {
  std::filesystem::create_directories(directory);
  json manifest;
  manifest["types"] = json::array();
  for (const auto& t : types_) {
    const std::string labels_file = t.id + "_labels.txt";
    write_labels(directory / labels_file, t.labels);
    manifest["types"].push_back({{"id", t.id}, {"labels_file", labels_file}});
  }
  manifest["relations"] = json::array();
  for (const auto& r : relations_) {
    const std::string matrix_file = r.edge_id + ".coo";
    write_coo(directory / matrix_file, r.values);
    manifest["relations"].push_back({{"edge_id", r.edge_id},
                                     {"source", r.source},
                                     {"target", r.target},
                                     {"matrix_file", matrix_file}});
  }
  manifest["constraints"] = json::array();
  for (const auto& c : constraints_) {
    const std::string matrix_file = c.constraint_id + ".coo";
    write_coo(directory / matrix_file, c.values);
    manifest["constraints"].push_back(
        {{"constraint_id", c.constraint_id}, {"type", c.type}, {"matrix_file", matrix_file}});
  }
  atomic_write_file(directory / "manifest.json", manifest.dump(2) + "\n");
}

Matrix normalize_matrix(const Matrix& m) {
  Matrix out = m;
  for (Index c = 0; c < out.cols(); ++c) {
    const double norm = out.col(c).norm();
    if (norm > 0.0) out.col(c) /= norm;
  }
  for (Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > 0.0) out.row(r) /= norm;
  }
  return out;
}

SparseMatrix normalize_matrix(const SparseMatrix& m) {
  Vector col_norm = Vector::Zero(m.cols());
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      col_norm[it.col()] += it.value() * it.value();
  col_norm = col_norm.cwiseSqrt();

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(m.nonZeros()));
  Vector row_norm = Vector::Zero(m.rows());
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      const double v = col_norm[it.col()] > 0.0 ? it.value() / col_norm[it.col()] : it.value();
      row_norm[it.row()] += v * v;
    }
  row_norm = row_norm.cwiseSqrt();
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      double v = col_norm[it.col()] > 0.0 ? it.value() / col_norm[it.col()] : it.value();
      if (row_norm[it.row()] > 0.0) v /= row_norm[it.row()];
      triplets.emplace_back(it.row(), it.col(), v);
    }
  SparseMatrix out(m.rows(), m.cols());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

Matrix row_stochastic(const Matrix& m) {
  Matrix out = m;
  for (Index r = 0; r < out.rows(); ++r) {
    const double sum = out.row(r).sum();
    if (sum > 0.0)
      out.row(r) /= sum;
    else
      out.row(r).setConstant(1.0 / static_cast<double>(out.cols()));
  }
  return out;
}

Matrix clamp_nonnegative(Matrix m) { return m.cwiseMax(0.0); }

FusionGraph normalize_graph(const FusionGraph& graph) {
  std::vector<ObjectType> types = graph.types();
  std::vector<RelationMatrix> relations;
  for (const auto& r : graph.relations())
    relations.push_back({r.edge_id, r.source, r.target, normalize_matrix(r.values)});
  std::vector<ConstraintMatrix> constraints;
  for (const auto& c : graph.constraints())
    constraints.push_back({c.constraint_id, c.type, normalize_matrix(c.values)});
  return FusionGraph(std::move(types), std::move(relations), std::move(constraints));
}

}  // namespace medusa
