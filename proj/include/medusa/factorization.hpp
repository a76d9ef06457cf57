#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "medusa/fusion_graph.hpp"

namespace medusa {

struct RankSpec {
  std::map<std::string, Index> ranks;  // type id -> latent dimension
};

enum class InitScheme { RandomUniform, RandomAcol };

struct FactorizationOptions {
  int max_iterations = 500;
  double rel_tolerance = 1e-5;
  std::uint64_t seed = 0;
  InitScheme init = InitScheme::RandomUniform;
};

// Result of the collective factorization: one non-negative factor G per
// object type (shared by all edges touching that type) and one unconstrained
// interaction matrix S per relation, so relation(i,j) ~ G_i * S_ij * G_j^T.
struct LatentModel {
  GraphSchema schema;
  std::map<std::string, Matrix> factors;       // type id -> n x k, entries >= 0
  std::map<std::string, Matrix> interactions;  // edge id -> k_src x k_tgt
  RankSpec ranks;
  FactorizationOptions options;
  std::vector<double> fit_log;  // objective per sweep, fit_log[0] is the initial value
  double final_objective = 0.0;
};

// k = max(1, round(fraction * n)) per type; fraction must lie in (0, 1].
RankSpec select_ranks(const FusionGraph& graph, double fraction);

// Sum of squared Frobenius residuals over relations plus tr(G^T Theta G) over
// constraints.
double objective(const FusionGraph& graph, const LatentModel& model);

// Alternating scheme: exact least-squares update of every S given the factors
// (Gram matrices ridged by 1e-12), then one multiplicative non-negative update
// of every G aggregating all incident edges and constraints. Stops when the
// relative objective change drops below rel_tolerance or after max_iterations
// sweeps. Deterministic for a fixed seed and any thread count.
LatentModel factorize(const FusionGraph& graph, const RankSpec& ranks,
                      const FactorizationOptions& options);

Matrix reconstruct(const LatentModel& model, const std::string& edge_id);

void save_model(const LatentModel& model, const std::filesystem::path& directory);
LatentModel load_model(const std::filesystem::path& directory);

}  // namespace medusa
