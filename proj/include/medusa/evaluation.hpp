#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medusa/detection.hpp"
#include "medusa/factorization.hpp"

namespace medusa {

// Ranking metrics over (score, is_positive) pairs where LOWER scores mark
// better candidates. auroc uses the rank-sum formulation with ties counted
// one half; auprc is average precision over the ascending-score ranking.
double auroc(const std::vector<std::pair<double, bool>>& scores);
double auprc(const std::vector<std::pair<double, bool>>& scores);

struct RankingMetrics {
  double auroc = 0.0;
  double auprc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

RankingMetrics ranking_metrics(const std::vector<std::pair<double, bool>>& scores);

// Everything needed to go from a fusion graph to scored candidates.
struct PipelineConfig {
  double rank_fraction = 0.4;
  bool normalize = true;  // L2-normalize the graph before factorization
  FactorizationOptions factorization;
  std::vector<std::string> chains;  // chain specs, e.g. "g_c > c_d"
  DetectionConfig detection;
};

LatentModel fit_pipeline(const FusionGraph& graph, const PipelineConfig& config);
SemanticsEnsemble build_ensemble(const LatentModel& model,
                                 const std::vector<std::string>& chain_specs);

// One association-prediction case. positives index candidate rows; CPI
// cases additionally name the pivot columns the candidates are scored
// against (CPE derives pivots from the positives themselves).
struct LoocvCase {
  std::string id;
  std::vector<Index> positives;
  std::vector<Index> pivot_columns;
};

struct CaseMetrics {
  std::string id;
  RankingMetrics metrics;
  bool skipped = false;
};

// The labeled (score, is_positive) pairs behind one case's metrics; also
// used for curve plotting. CPE pools the held-out positive's score with all
// non-positive scores across leave-one-out folds; CPI scores one round.
std::vector<std::pair<double, bool>> association_score_pairs(const SemanticsEnsemble& ensemble,
                                                             const LoocvCase& item,
                                                             const DetectionConfig& config);

// Leave-one-out association prediction. CPE: each positive is held out in
// turn, the remaining positives act as pivots, and the held-out score is
// pooled with every non-positive's score across folds. CPI: one scoring
// round against the case's pivot columns, positives vs the rest.
std::vector<CaseMetrics> loocv_association(const SemanticsEnsemble& ensemble,
                                           const std::vector<LoocvCase>& cases,
                                           const DetectionConfig& config);
std::vector<CaseMetrics> loocv_association(const FusionGraph& graph,
                                           const std::vector<LoocvCase>& cases,
                                           const PipelineConfig& config);

struct RecoveryReport {
  double removal_fraction = 0.0;
  double recall_at_k = 0.0;
  Module module;
  std::vector<Index> held_out;
};

// Removes floor(fraction * |truth|) members of the truth module with a
// dedicated seeded generator, detects a module of the full truth size from
// the remaining members (concentration regime), and reports recall over the
// held-out members. Returns nullopt when the rounding removes nobody.
std::optional<RecoveryReport> module_recovery(const SemanticsEnsemble& ensemble,
                                              const std::vector<Index>& truth_module,
                                              double fraction, const DetectionConfig& config,
                                              std::uint64_t removal_seed);
std::optional<RecoveryReport> module_recovery(const FusionGraph& graph,
                                              const std::vector<Index>& truth_module,
                                              double fraction, const PipelineConfig& config,
                                              std::uint64_t removal_seed);

struct BruteForceResult {
  std::vector<Index> members;  // ordered, since the pivot state evolves
  double valuation = 0.0;
};

// Exhaustive ordered-subset search maximizing the greedy valuation
// f = sum of -ln p-at-inclusion, under the same state dynamics as the
// greedy detectors. Guarded to toy scale (<= 12 candidates, k <= 3).
BruteForceResult brute_force_best_module(const Matrix& C, const std::vector<Index>& pivots,
                                         int k, Regime regime, const DetectionConfig& config);

// Desk-scale synthetic corpus: four types (gene, term, chem, disease) tied
// by four relations; the gene-chem and chem-disease relations carry a
// planted low-rank signal, the term relations are pure noise. The same
// random draws are consumed whether or not signal > 0, so signal = 0 yields
// statistically indistinguishable planted rows.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  Index n_genes = 36;
  Index n_terms = 24;
  Index n_chems = 20;
  Index n_diseases = 14;
  double edge_density = 1.0;
  Index planted_size = 10;
  double signal = 6.0;
};

struct PlantedTruth {
  std::vector<Index> module_rows;     // planted gene rows
  std::vector<Index> pivot_columns;   // signal disease columns
};

std::pair<FusionGraph, PlantedTruth> generate_synthetic(const SyntheticSpec& spec);

struct ParameterGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<Index> qs;
};

ParameterGrid default_parameter_grid();

struct GridSearchResult {
  double alpha = 0.5;
  double beta = 0.05;
  Index q = 2;
  double mean_auroc = 0.0;
};

// Scores every grid point by mean AUROC over the non-skipped cases (model
// fitted once; only detection parameters vary). Ties keep the earliest
// grid point in alpha-major, beta-middle, q-minor order.
GridSearchResult grid_search(const FusionGraph& graph, const std::vector<LoocvCase>& cases,
                             const PipelineConfig& base, const ParameterGrid& grid);

}  // namespace medusa
