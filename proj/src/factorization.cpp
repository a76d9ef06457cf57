#include "medusa/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medusa/errors.hpp"
#include "medusa/parallel.hpp"

namespace medusa {

using nlohmann::json;

namespace {

constexpr double kGramRidge = 1e-12;
constexpr double kDenominatorFloor = 1e-12;

// Uniform in [0, 1) built directly from the generator so results do not
// depend on the standard library's distribution implementation.
double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

Matrix positive_part(const Matrix& m) { return m.cwiseMax(0.0); }
Matrix negative_part(const Matrix& m) { return (-m).cwiseMax(0.0); }

struct EdgeData {
  const RelationMatrix* relation;
  Matrix dense;
  double squared_norm;
};

struct ConstraintData {
  const ConstraintMatrix* constraint;
  SparseMatrix sym_pos;  // positive part of Theta + Theta^T
  SparseMatrix sym_neg;  // negative part, stored non-negative
};

std::string init_scheme_name(InitScheme scheme) {
  return scheme == InitScheme::RandomUniform ? "random-uniform" : "random-acol";
}

InitScheme init_scheme_from_name(const std::string& name) {
  if (name == "random-uniform") return InitScheme::RandomUniform;
  if (name == "random-acol") return InitScheme::RandomAcol;
  throw ValidationError("unknown init scheme: " + name);
}

}  // namespace

RankSpec select_ranks(const FusionGraph& graph, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ValidationError("rank fraction must lie in (0, 1], got " + format_double(fraction));
  RankSpec spec;
  for (const auto& t : graph.types()) {
    const auto k = static_cast<Index>(std::lround(fraction * static_cast<double>(t.size())));
    spec.ranks[t.id] = std::min<Index>(t.size(), std::max<Index>(1, k));
  }
  return spec;
}

double objective(const FusionGraph& graph, const LatentModel& model) {
  double total = 0.0;
  for (const auto& r : graph.relations()) {
    const Matrix& gi = model.factors.at(r.source);
    const Matrix& gj = model.factors.at(r.target);
    const Matrix& s = model.interactions.at(r.edge_id);
    const Matrix residual = Matrix(r.values) - gi * s * gj.transpose();
    total += residual.squaredNorm();
  }
  for (const auto& c : graph.constraints()) {
    const Matrix& g = model.factors.at(c.type);
    total += (g.transpose() * (c.values * g)).trace();
  }
  return total;
}

namespace {

std::map<std::string, Matrix> init_factors(const FusionGraph& graph, const RankSpec& ranks,
                                           const FactorizationOptions& options) {
  std::mt19937_64 gen(options.seed);
  std::map<std::string, Matrix> factors;
  for (const auto& t : graph.types()) {
    const Index n = t.size();
    const Index k = ranks.ranks.at(t.id);
    Matrix g(n, k);
    const auto incident = graph.relations_with(t.id);
    if (options.init == InitScheme::RandomUniform) {
      double abs_sum = 0.0, count = 0.0;
      for (const auto* r : incident) {
        for (Index outer = 0; outer < r->values.outerSize(); ++outer)
          for (SparseMatrix::InnerIterator it(r->values, outer); it; ++it)
            abs_sum += std::abs(it.value());
        count += static_cast<double>(r->values.rows()) * static_cast<double>(r->values.cols());
      }
      const double mean_abs = count > 0.0 ? abs_sum / count : 0.0;
      const double scale = mean_abs > 0.0 ? std::sqrt(mean_abs) : 1.0;
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) g(i, j) = uniform01(gen) * scale;
    } else {
      // Each latent column is the average of a few data columns, oriented so
      // rows correspond to this type's entities.
      std::vector<std::pair<const RelationMatrix*, bool>> oriented;  // (edge, transposed)
      Index pool = 0;
      for (const auto* r : incident) {
        if (r->source == t.id) {
          oriented.emplace_back(r, false);
          pool += r->values.cols();
        }
        if (r->target == t.id) {
          oriented.emplace_back(r, true);
          pool += r->values.rows();
        }
      }
      if (pool == 0) {
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < k; ++j) g(i, j) = uniform01(gen);
      } else {
        const Index draws = std::min<Index>(5, pool);
        for (Index j = 0; j < k; ++j) {
          Vector acc = Vector::Zero(n);
          for (Index d = 0; d < draws; ++d) {
            Index pick = static_cast<Index>(gen() % static_cast<std::uint64_t>(pool));
            for (const auto& [r, transposed] : oriented) {
              const Index width = transposed ? r->values.rows() : r->values.cols();
              if (pick < width) {
                if (transposed)
                  acc += Matrix(r->values).row(pick).transpose();
                else
                  acc += Matrix(r->values).col(pick);
                break;
              }
              pick -= width;
            }
          }
          g.col(j) = (acc / static_cast<double>(draws)).cwiseMax(0.0);
        }
      }
    }
    factors[t.id] = std::move(g);
  }
  return factors;
}

}  // namespace

LatentModel factorize(const FusionGraph& graph, const RankSpec& ranks,
                      const FactorizationOptions& options) {
  for (const auto& [type_id, k] : ranks.ranks)
    if (!graph.has_type(type_id))
      throw ValidationError("rank given for unknown type " + type_id);
  for (const auto& t : graph.types()) {
    auto it = ranks.ranks.find(t.id);
    if (it == ranks.ranks.end()) throw ValidationError("no rank given for type " + t.id);
    if (it->second < 1 || it->second > t.size())
      throw ValidationError("rank for type " + t.id + " must lie in [1, " +
                            std::to_string(t.size()) + "]");
  }
  if (options.max_iterations < 0) throw ValidationError("max_iterations must be >= 0");

  std::vector<EdgeData> edges;
  for (const auto& r : graph.relations())
    edges.push_back({&r, Matrix(r.values), Matrix(r.values).squaredNorm()});
  std::vector<ConstraintData> constraints;
  for (const auto& c : graph.constraints()) {
    SparseMatrix sym = SparseMatrix(c.values) + SparseMatrix(c.values.transpose());
    std::vector<Eigen::Triplet<double>> pos, neg;
    for (Index k = 0; k < sym.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(sym, k); it; ++it) {
        if (it.value() > 0.0) pos.emplace_back(it.row(), it.col(), it.value());
        if (it.value() < 0.0) neg.emplace_back(it.row(), it.col(), -it.value());
      }
    SparseMatrix sp(sym.rows(), sym.cols()), sn(sym.rows(), sym.cols());
    sp.setFromTriplets(pos.begin(), pos.end());
    sn.setFromTriplets(neg.begin(), neg.end());
    constraints.push_back({&c, std::move(sp), std::move(sn)});
  }

  LatentModel model;
  model.schema = graph.schema();
  model.ranks = ranks;
  model.options = options;
  model.factors = init_factors(graph, ranks, options);
  for (const auto& e : edges)
    model.interactions[e.relation->edge_id] =
        Matrix::Zero(ranks.ranks.at(e.relation->source), ranks.ranks.at(e.relation->target));

  std::vector<std::string> type_order;
  for (const auto& t : graph.types()) type_order.push_back(t.id);
  std::sort(type_order.begin(), type_order.end());

  auto update_interactions = [&] {
    parallel_for(static_cast<std::int64_t>(edges.size()), [&](std::int64_t idx) {
      const EdgeData& e = edges[static_cast<std::size_t>(idx)];
      const Matrix& gi = model.factors.at(e.relation->source);
      const Matrix& gj = model.factors.at(e.relation->target);
      Matrix gram_i = gi.transpose() * gi;
      Matrix gram_j = gj.transpose() * gj;
      gram_i.diagonal().array() += kGramRidge;
      gram_j.diagonal().array() += kGramRidge;
      const Matrix cross = gi.transpose() * (e.dense * gj);
      const Matrix left = gram_i.ldlt().solve(cross);
      model.interactions[e.relation->edge_id] =
          gram_j.ldlt().solve(left.transpose()).transpose();
    });
  };

  auto current_objective = [&] {
    double total = 0.0;
    for (const auto& e : edges) {
      const Matrix& gi = model.factors.at(e.relation->source);
      const Matrix& gj = model.factors.at(e.relation->target);
      const Matrix& s = model.interactions.at(e.relation->edge_id);
      total += (e.dense - gi * s * gj.transpose()).squaredNorm();
    }
    for (const auto& c : constraints) {
      const Matrix& g = model.factors.at(c.constraint->type);
      total += (g.transpose() * (c.constraint->values * g)).trace();
    }
    return total;
  };

  update_interactions();
  model.fit_log.clear();
  model.fit_log.push_back(current_objective());

  for (int iteration = 1; iteration <= options.max_iterations; ++iteration) {
    // Multiplicative factor update from a common snapshot; every aggregation
    // walks edges in manifest order so reductions are order-stable.
    std::vector<Matrix> updated(type_order.size());
    parallel_for(static_cast<std::int64_t>(type_order.size()), [&](std::int64_t ti) {
      const std::string& t = type_order[static_cast<std::size_t>(ti)];
      const Matrix& g = model.factors.at(t);
      Matrix num = Matrix::Zero(g.rows(), g.cols());
      Matrix den = Matrix::Zero(g.rows(), g.cols());
      for (const auto& e : edges) {
        const Matrix& s = model.interactions.at(e.relation->edge_id);
        if (e.relation->source == t) {
          const Matrix& gj = model.factors.at(e.relation->target);
          const Matrix data = e.dense * gj * s.transpose();
          const Matrix gram = s * (gj.transpose() * gj) * s.transpose();
          num += positive_part(data) + g * negative_part(gram);
          den += negative_part(data) + g * positive_part(gram);
        }
        if (e.relation->target == t) {
          const Matrix& gi = model.factors.at(e.relation->source);
          const Matrix data = e.dense.transpose() * gi * s;
          const Matrix gram = s.transpose() * (gi.transpose() * gi) * s;
          num += positive_part(data) + g * negative_part(gram);
          den += negative_part(data) + g * positive_part(gram);
        }
      }
      for (const auto& c : constraints) {
        if (c.constraint->type != t) continue;
        num += c.sym_neg * g;
        den += c.sym_pos * g;
      }
      updated[static_cast<std::size_t>(ti)] =
          g.cwiseProduct((num.cwiseQuotient(den.cwiseMax(kDenominatorFloor))).cwiseSqrt());
    });
    for (std::size_t ti = 0; ti < type_order.size(); ++ti)
      model.factors[type_order[ti]] = std::move(updated[ti]);

    update_interactions();
    const double value = current_objective();
    if (!std::isfinite(value))
      throw NumericalError("non-finite objective at iteration " + std::to_string(iteration));
    const double previous = model.fit_log.back();
    model.fit_log.push_back(value);
    if (std::abs(value - previous) / std::max(previous, 1e-12) < options.rel_tolerance) break;
  }

  model.final_objective = model.fit_log.back();
  return model;
}

Matrix reconstruct(const LatentModel& model, const std::string& edge_id) {
  const auto& e = model.schema.edge(edge_id);
  return model.factors.at(e.source) * model.interactions.at(edge_id) *
         model.factors.at(e.target).transpose();
}

void save_model(const LatentModel& model, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  json doc;
  doc["format"] = "medusa-model-v1";
  doc["final_objective"] = model.final_objective;
  doc["fit_log"] = model.fit_log;
  doc["options"] = {{"max_iterations", model.options.max_iterations},
                    {"rel_tolerance", model.options.rel_tolerance},
                    {"seed", model.options.seed},
                    {"init", init_scheme_name(model.options.init)}};
  doc["ranks"] = json::object();
  for (const auto& [type_id, k] : model.ranks.ranks) doc["ranks"][type_id] = k;
  doc["schema"]["types"] = json::array();
  for (const auto& t : model.schema.types)
    doc["schema"]["types"].push_back({{"id", t.id}, {"labels", t.labels}});
  doc["schema"]["relations"] = json::array();
  for (const auto& e : model.schema.relations)
    doc["schema"]["relations"].push_back(
        {{"edge_id", e.edge_id}, {"source", e.source}, {"target", e.target}});
  atomic_write_file(directory / "model.json", doc.dump(2) + "\n");
  for (const auto& [type_id, g] : model.factors)
    write_coo(directory / ("factor_" + type_id + ".coo"), g);
  for (const auto& [edge_id, s] : model.interactions)
    write_coo(directory / ("interaction_" + edge_id + ".coo"), s);
}

LatentModel load_model(const std::filesystem::path& directory) {
  std::ifstream in(directory / "model.json");
  if (!in) throw ValidationError("missing file: " + (directory / "model.json").string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("bad model manifest: " + std::string(e.what()));
  }
  if (doc.value("format", "") != "medusa-model-v1")
    throw ValidationError("unrecognized model format in " + directory.string());

  LatentModel model;
  model.final_objective = doc.at("final_objective").get<double>();
  model.fit_log = doc.at("fit_log").get<std::vector<double>>();
  const auto& opts = doc.at("options");
  model.options.max_iterations = opts.at("max_iterations").get<int>();
  model.options.rel_tolerance = opts.at("rel_tolerance").get<double>();
  model.options.seed = opts.at("seed").get<std::uint64_t>();
  model.options.init = init_scheme_from_name(opts.at("init").get<std::string>());
  for (const auto& [type_id, k] : doc.at("ranks").items())
    model.ranks.ranks[type_id] = k.get<Index>();
  for (const auto& t : doc.at("schema").at("types"))
    model.schema.types.push_back(
        {t.at("id").get<std::string>(), t.at("labels").get<std::vector<std::string>>()});
  for (const auto& e : doc.at("schema").at("relations"))
    model.schema.relations.push_back({e.at("edge_id").get<std::string>(),
                                      e.at("source").get<std::string>(),
                                      e.at("target").get<std::string>()});
  for (const auto& t : model.schema.types)
    model.factors[t.id] = Matrix(read_coo(directory / ("factor_" + t.id + ".coo")));
  for (const auto& e : model.schema.relations)
    model.interactions[e.edge_id] =
        Matrix(read_coo(directory / ("interaction_" + e.edge_id + ".coo")));
  return model;
}

}  // namespace medusa
