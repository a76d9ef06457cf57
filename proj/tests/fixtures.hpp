#pragma once

// Seeded synthetic fusion graphs used by the factorization tests and the
// acceptance checks: generic random graphs for descent properties and
// exactly-low-rank graphs for recovery checks.

#include <random>
#include <string>
#include <vector>

#include "medusa/factorization.hpp"
#include "medusa/fusion_graph.hpp"

namespace fixtures {

using medusa::Index;
using medusa::Matrix;

inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline medusa::SparseMatrix sparse_from(const Matrix& m) {
  medusa::SparseMatrix s = m.sparseView();
  s.makeCompressed();
  return s;
}

inline medusa::ObjectType make_type(const std::string& id, Index n) {
  medusa::ObjectType t;
  t.id = id;
  for (Index i = 0; i < n; ++i) t.labels.push_back(id + std::to_string(i));
  return t;
}

struct RandomGraph {
  medusa::FusionGraph graph;
  medusa::RankSpec ranks;
};

// Path-topology graph of 3 or 4 types (sizes 8..40) with ~70% dense uniform
// relations, an optional shortcut edge, an optional non-negative symmetric
// constraint on the first type, and ranks in 1..4.
inline RandomGraph random_fusion_graph(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const int n_types = 3 + static_cast<int>(gen() % 2);

  std::vector<medusa::ObjectType> types;
  std::vector<Index> sizes;
  for (int t = 0; t < n_types; ++t) {
    const Index n = 8 + static_cast<Index>(gen() % 33);
    sizes.push_back(n);
    types.push_back(make_type("t" + std::to_string(t), n));
  }

  auto random_matrix = [&](Index rows, Index cols) {
    Matrix m = Matrix::Zero(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        if (gen() % 10 < 7) m(r, c) = uniform01(gen);
    if (m.cwiseAbs().sum() == 0.0) m(0, 0) = 0.5;  // keep every relation non-empty
    return m;
  };

  std::vector<medusa::RelationMatrix> relations;
  for (int t = 0; t + 1 < n_types; ++t) {
    const std::string src = "t" + std::to_string(t);
    const std::string tgt = "t" + std::to_string(t + 1);
    relations.push_back({src + "_" + tgt, src, tgt,
                         sparse_from(random_matrix(sizes[t], sizes[t + 1]))});
  }
  if (gen() % 2 == 0)
    relations.push_back({"t0_t2", "t0", "t2", sparse_from(random_matrix(sizes[0], sizes[2]))});

  std::vector<medusa::ConstraintMatrix> constraints;
  if (gen() % 2 == 0) {
    Matrix theta = Matrix::Zero(sizes[0], sizes[0]);
    const int n_entries = 2 + static_cast<int>(gen() % 4);
    for (int e = 0; e < n_entries; ++e) {
      const Index i = static_cast<Index>(gen() % static_cast<std::uint64_t>(sizes[0]));
      const Index j = static_cast<Index>(gen() % static_cast<std::uint64_t>(sizes[0]));
      const double v = 0.05 + 0.1 * uniform01(gen);
      theta(i, j) += v;
      theta(j, i) += v;
    }
    constraints.push_back({"theta0", "t0", sparse_from(theta)});
  }

  medusa::RankSpec ranks;
  for (int t = 0; t < n_types; ++t) {
    const Index k = 1 + static_cast<Index>(gen() % 4);
    ranks.ranks["t" + std::to_string(t)] = std::min(k, sizes[static_cast<std::size_t>(t)]);
  }

  return RandomGraph{
      medusa::FusionGraph(std::move(types), std::move(relations), std::move(constraints)),
      std::move(ranks)};
}

struct PlantedGraph {
  medusa::FusionGraph graph;
  medusa::RankSpec ranks;  // the exact generative ranks
};

// Three types chained by two relations built exactly as G_src * S * G_tgt^T
// from non-negative factors, so a factorization at the generative ranks can
// reach zero residual.
inline PlantedGraph planted_low_rank_graph(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const Index sizes[3] = {12 + static_cast<Index>(gen() % 9),
                          12 + static_cast<Index>(gen() % 9),
                          12 + static_cast<Index>(gen() % 9)};
  const Index ranks_true[3] = {2 + static_cast<Index>(gen() % 2),
                               2 + static_cast<Index>(gen() % 2),
                               2 + static_cast<Index>(gen() % 2)};

  Matrix g[3];
  for (int t = 0; t < 3; ++t) {
    g[t] = Matrix(sizes[t], ranks_true[t]);
    for (Index r = 0; r < sizes[t]; ++r)
      for (Index c = 0; c < ranks_true[t]; ++c) g[t](r, c) = 0.1 + uniform01(gen);
  }
  Matrix s01(ranks_true[0], ranks_true[1]);
  for (Index r = 0; r < s01.rows(); ++r)
    for (Index c = 0; c < s01.cols(); ++c) s01(r, c) = 0.2 + uniform01(gen);
  Matrix s12(ranks_true[1], ranks_true[2]);
  for (Index r = 0; r < s12.rows(); ++r)
    for (Index c = 0; c < s12.cols(); ++c) s12(r, c) = 0.2 + uniform01(gen);

  std::vector<medusa::ObjectType> types = {make_type("a", sizes[0]), make_type("b", sizes[1]),
                                           make_type("c", sizes[2])};
  std::vector<medusa::RelationMatrix> relations = {
      {"a_b", "a", "b", sparse_from(g[0] * s01 * g[1].transpose())},
      {"b_c", "b", "c", sparse_from(g[1] * s12 * g[2].transpose())}};

  medusa::RankSpec ranks;
  ranks.ranks["a"] = ranks_true[0];
  ranks.ranks["b"] = ranks_true[1];
  ranks.ranks["c"] = ranks_true[2];

  return PlantedGraph{medusa::FusionGraph(std::move(types), std::move(relations), {}),
                      std::move(ranks)};
}

// Aggregate relative reconstruction error over all relations.
inline double relative_reconstruction_error(const medusa::FusionGraph& graph,
                                            const medusa::LatentModel& model) {
  double num = 0.0, den = 0.0;
  for (const auto& rel : graph.relations()) {
    const Matrix r = Matrix(rel.values);
    const Matrix rhat = medusa::reconstruct(model, rel.edge_id);
    num += (r - rhat).squaredNorm();
    den += r.squaredNorm();
  }
  return std::sqrt(num / den);
}

}  // namespace fixtures
