#pragma once

#include <string>
#include <vector>

#include "medusa/chains.hpp"
#include "medusa/scoring.hpp"

namespace medusa {

enum class Regime { CPE, CPI };
enum class Combination { Single, Combined };

struct DetectionConfig {
  Regime regime = Regime::CPE;
  int k = 1;
  double alpha = 0.5;  // down-weighting of accreted pivots (CPE)
  Index q = 2;         // number of strongest columns per candidate (CPE)
  double beta = 0.05;  // visibility decay rate (CPI)
  Combination combination = Combination::Single;
};

struct ModuleMember {
  Index candidate = -1;
  int iteration = 0;  // 1-based inclusion round
  double p_value = 1.0;
  std::vector<double> per_semantic;  // p per chain when combining
};

struct Module {
  std::vector<ModuleMember> members;
  int k = 0;
  Regime regime = Regime::CPE;
  std::vector<std::string> semantic_labels;
  std::vector<std::vector<double>> weights_log;  // semantic weights per round
};

// Chains scored jointly. All chains must share the candidate (row) index
// space; context columns may differ per chain.
struct SemanticsEnsemble {
  std::vector<MaterializedChain> chains;
};

// Visibility multiplier of candidate i after the rows in history were
// selected: max(0, 1 - sum_t beta^t * exp(-KL(C_i, C_{history[t-1]}))).
double visibility_decay(const Matrix& C, Index i, const std::vector<Index>& history,
                        double beta);

// Per-semantic weights for combined scoring. CPE: proportional to the mean
// reciprocal rank of each original pivot when it is held out and re-scored
// against the candidate pool (recomputed as the pivot state grows); with
// fewer than two original pivots the weights fall back to uniform with a
// warning. CPI: proportional to exp(-mean pairwise KL) of the pivot column
// profiles; fixed over rounds since pivot columns never change.
std::vector<double> combine_weights_cpe(const SemanticsEnsemble& ensemble,
                                        const PivotState& state, Index q);
std::vector<double> combine_weights_cpi(const SemanticsEnsemble& ensemble,
                                        const std::vector<Index>& pivot_columns);

// One greedy round of scoring. combined[i] is the weighted p value of row i
// (1.0 placeholder for rows excluded from the pool); per_semantic[d][i] the
// per-chain p values; weights the semantic weights used this round.
struct ScoredRound {
  std::vector<double> combined;
  std::vector<std::vector<double>> per_semantic;
  std::vector<double> weights;
};

ScoredRound score_round_cpe(const SemanticsEnsemble& ensemble, const PivotState& state,
                            Index q);
ScoredRound score_round_cpi(const SemanticsEnsemble& ensemble,
                            const std::vector<Index>& pivot_columns,
                            const std::vector<Index>& history, double beta,
                            const std::vector<double>& weights);

// Greedy size-k detection. CPE: pivots index candidate rows; the candidate
// pool excludes them; selected members are accreted into the pivot state
// with weight (1-alpha)^r. CPI: pivots index context columns; the pool is
// all rows; selections leave the pool and feed the visibility decay.
Module detect_cpe(const SemanticsEnsemble& ensemble, const std::vector<Index>& pivots,
                  const DetectionConfig& config);
Module detect_cpi(const SemanticsEnsemble& ensemble, const std::vector<Index>& pivot_columns,
                  const DetectionConfig& config);
Module detect(const SemanticsEnsemble& ensemble, const std::vector<Index>& pivots,
              const DetectionConfig& config);

// Single-matrix conveniences wrapping a one-chain ensemble.
Module detect_cpe(const Matrix& C, const std::vector<Index>& pivots,
                  const DetectionConfig& config);
Module detect_cpi(const Matrix& C, const std::vector<Index>& pivot_columns,
                  const DetectionConfig& config);

// Greedy objective: sum over members of -ln(max(p, 1e-300)).
double module_valuation(const Module& module);

}  // namespace medusa
