#include "medusa/detection.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

#include "medusa/errors.hpp"
#include "medusa/parallel.hpp"

namespace medusa {

namespace {

constexpr double kValuationFloor = 1e-300;

void validate_ensemble(const SemanticsEnsemble& ensemble) {
  if (ensemble.chains.empty()) throw ValidationError("detection needs at least one semantic");
  const Index rows = ensemble.chains.front().values.rows();
  for (const auto& c : ensemble.chains)
    if (c.values.rows() != rows)
      throw ValidationError("semantics disagree on the candidate space: " +
                            std::to_string(c.values.rows()) + " rows vs " +
                            std::to_string(rows));
}

std::vector<double> uniform_weights(std::size_t d) {
  return std::vector<double>(d, 1.0 / static_cast<double>(d));
}

std::vector<std::string> labels_of(const SemanticsEnsemble& ensemble) {
  std::vector<std::string> out;
  for (const auto& c : ensemble.chains) out.push_back(c.label);
  return out;
}

}  // namespace

double visibility_decay(const Matrix& C, Index i, const std::vector<Index>& history,
                        double beta) {
  if (i < 0 || i >= C.rows()) throw ValidationError("row index out of range in visibility_decay");
  double sum = 0.0;
  const Vector row_i = C.row(i).transpose();
  for (std::size_t t = 1; t <= history.size(); ++t) {
    const Index x = history[t - 1];
    if (x < 0 || x >= C.rows()) throw ValidationError("history row out of range");
    sum += std::pow(beta, static_cast<double>(t)) *
           std::exp(-kl_divergence(row_i, C.row(x).transpose()));
  }
  return std::max(0.0, 1.0 - sum);
}

std::vector<double> combine_weights_cpe(const SemanticsEnsemble& ensemble,
                                        const PivotState& state, Index q) {
  validate_ensemble(ensemble);
  const std::size_t d = ensemble.chains.size();
  if (d == 1) return {1.0};
  if (state.original.size() < 2) {
    std::cerr << "warning: fewer than 2 original pivots; using uniform semantic weights\n";
    return uniform_weights(d);
  }

  const Index n = ensemble.chains.front().values.rows();
  std::vector<Index> pool;
  for (Index i = 0; i < n; ++i)
    if (!state.contains(i)) pool.push_back(i);

  // One task per (semantic, held-out pivot): score the pool plus the
  // held-out pivot with that pivot removed from the state, then record the
  // pivot's reciprocal rank.
  const std::size_t n_pivots = state.original.size();
  std::vector<double> reciprocal(d * n_pivots, 0.0);
  parallel_for(static_cast<std::int64_t>(d * n_pivots), [&](std::int64_t task) {
    const std::size_t chain_idx = static_cast<std::size_t>(task) / n_pivots;
    const std::size_t pivot_idx = static_cast<std::size_t>(task) % n_pivots;
    const Index held = state.original[pivot_idx];
    PivotState reduced = state;
    reduced.original.erase(
        std::remove(reduced.original.begin(), reduced.original.end(), held),
        reduced.original.end());
    const Matrix& C = ensemble.chains[chain_idx].values;
    const double p_held = p_cpe(C, reduced, held, q).p_value;
    std::size_t rank = 1;
    for (const Index j : pool) {
      const double p_j = p_cpe(C, reduced, j, q).p_value;
      if (p_j < p_held || (p_j == p_held && j < held)) ++rank;
    }
    reciprocal[task] = 1.0 / static_cast<double>(rank);
  });

  std::vector<double> weights(d, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double mrr = 0.0;
    for (std::size_t p = 0; p < n_pivots; ++p) mrr += reciprocal[c * n_pivots + p];
    weights[c] = mrr / static_cast<double>(n_pivots);
    total += weights[c];
  }
  if (total <= 0.0) return uniform_weights(d);
  for (double& w : weights) w /= total;
  return weights;
}

std::vector<double> combine_weights_cpi(const SemanticsEnsemble& ensemble,
                                        const std::vector<Index>& pivot_columns) {
  validate_ensemble(ensemble);
  const std::size_t d = ensemble.chains.size();
  if (d == 1) return {1.0};
  if (pivot_columns.size() < 2) {
    std::cerr << "warning: fewer than 2 pivot columns; using uniform semantic weights\n";
    return uniform_weights(d);
  }
  std::vector<double> weights(d, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const Matrix& C = ensemble.chains[c].values;
    double kl_sum = 0.0;
    std::size_t pairs = 0;
    for (const Index a : pivot_columns)
      for (const Index b : pivot_columns) {
        if (a == b) continue;
        if (a < 0 || a >= C.cols() || b < 0 || b >= C.cols())
          throw ValidationError("pivot column out of range in semantic " +
                                ensemble.chains[c].label);
        kl_sum += kl_divergence(C.col(a), C.col(b));
        ++pairs;
      }
    weights[c] = std::exp(-kl_sum / static_cast<double>(pairs));
    total += weights[c];
  }
  for (double& w : weights) w /= total;
  return weights;
}

ScoredRound score_round_cpe(const SemanticsEnsemble& ensemble, const PivotState& state,
                            Index q) {
  validate_ensemble(ensemble);
  const Index n = ensemble.chains.front().values.rows();
  const std::size_t d = ensemble.chains.size();
  ScoredRound round;
  round.weights = combine_weights_cpe(ensemble, state, q);
  round.combined.assign(static_cast<std::size_t>(n), 1.0);
  round.per_semantic.assign(d, std::vector<double>(static_cast<std::size_t>(n), 1.0));
  parallel_for(n, [&](std::int64_t i) {
    if (state.contains(i)) return;
    double combined = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double p = p_cpe(ensemble.chains[c].values, state, i, q).p_value;
      round.per_semantic[c][static_cast<std::size_t>(i)] = p;
      combined += round.weights[c] * p;
    }
    round.combined[static_cast<std::size_t>(i)] = combined;
  });
  return round;
}

ScoredRound score_round_cpi(const SemanticsEnsemble& ensemble,
                            const std::vector<Index>& pivot_columns,
                            const std::vector<Index>& history, double beta,
                            const std::vector<double>& weights) {
  validate_ensemble(ensemble);
  if (weights.size() != ensemble.chains.size())
    throw ValidationError("one weight per semantic expected");
  const Index n = ensemble.chains.front().values.rows();
  const std::size_t d = ensemble.chains.size();
  ScoredRound round;
  round.weights = weights;
  round.combined.assign(static_cast<std::size_t>(n), 1.0);
  round.per_semantic.assign(d, std::vector<double>(static_cast<std::size_t>(n), 1.0));
  parallel_for(n, [&](std::int64_t i) {
    double combined = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const Matrix& C = ensemble.chains[c].values;
      const double decay = visibility_decay(C, i, history, beta);
      const double p = p_cpi(C, pivot_columns, i, decay).p_value;
      round.per_semantic[c][static_cast<std::size_t>(i)] = p;
      combined += weights[c] * p;
    }
    round.combined[static_cast<std::size_t>(i)] = combined;
  });
  return round;
}

namespace {

void validate_config_common(const SemanticsEnsemble& ensemble, const DetectionConfig& config) {
  if (config.k < 0) throw ValidationError("k must be >= 0");
  if (config.combination == Combination::Single && ensemble.chains.size() > 1)
    throw ValidationError("multiple semantics require combined mode");
}

}  // namespace

Module detect_cpe(const SemanticsEnsemble& ensemble, const std::vector<Index>& pivots,
                  const DetectionConfig& config) {
  validate_ensemble(ensemble);
  validate_config_common(ensemble, config);
  if (!(config.alpha >= 0.0 && config.alpha < 1.0))
    throw ValidationError("alpha must lie in [0, 1)");
  if (pivots.empty()) throw ValidationError("pivot set must be non-empty");
  const Index n = ensemble.chains.front().values.rows();
  for (const auto& chain : ensemble.chains)
    if (config.q < 1 || config.q > chain.values.cols())
      throw ValidationError("q must lie in [1, " + std::to_string(chain.values.cols()) +
                            "] for semantic " + chain.label);

  std::set<Index> pivot_set;
  for (const Index p : pivots) {
    if (p < 0 || p >= n) throw ValidationError("pivot row out of range");
    pivot_set.insert(p);
  }

  Module module;
  module.k = config.k;
  module.regime = Regime::CPE;
  module.semantic_labels = labels_of(ensemble);
  if (config.k == 0) return module;

  std::vector<Index> pool;
  for (Index i = 0; i < n; ++i)
    if (!pivot_set.count(i)) pool.push_back(i);
  if (pool.empty()) throw ValidationError("empty candidate pool");

  PivotState state;
  state.original.assign(pivot_set.begin(), pivot_set.end());
  state.alpha = config.alpha;

  const int rounds = std::min<int>(config.k, static_cast<int>(pool.size()));
  for (int r = 1; r <= rounds; ++r) {
    const ScoredRound round = score_round_cpe(ensemble, state, config.q);
    Index best = pool.front();
    for (const Index i : pool)
      if (round.combined[static_cast<std::size_t>(i)] <
          round.combined[static_cast<std::size_t>(best)])
        best = i;

    ModuleMember member;
    member.candidate = best;
    member.iteration = r;
    member.p_value = round.combined[static_cast<std::size_t>(best)];
    for (const auto& per : round.per_semantic)
      member.per_semantic.push_back(per[static_cast<std::size_t>(best)]);
    module.members.push_back(std::move(member));
    module.weights_log.push_back(round.weights);

    state.accreted.emplace_back(best, r);
    pool.erase(std::find(pool.begin(), pool.end(), best));
  }
  return module;
}

Module detect_cpi(const SemanticsEnsemble& ensemble, const std::vector<Index>& pivot_columns,
                  const DetectionConfig& config) {
  validate_ensemble(ensemble);
  validate_config_common(ensemble, config);
  if (!(config.beta >= 0.0 && config.beta < 1.0))
    throw ValidationError("beta must lie in [0, 1)");
  if (pivot_columns.empty()) throw ValidationError("pivot column set must be non-empty");
  for (const auto& chain : ensemble.chains)
    for (const Index c : pivot_columns)
      if (c < 0 || c >= chain.values.cols())
        throw ValidationError("pivot column out of range for semantic " + chain.label);

  Module module;
  module.k = config.k;
  module.regime = Regime::CPI;
  module.semantic_labels = labels_of(ensemble);
  if (config.k == 0) return module;

  const Index n = ensemble.chains.front().values.rows();
  std::vector<Index> pool;
  for (Index i = 0; i < n; ++i) pool.push_back(i);
  if (pool.empty()) throw ValidationError("empty candidate pool");

  const std::vector<double> weights = ensemble.chains.size() == 1
                                          ? std::vector<double>{1.0}
                                          : combine_weights_cpi(ensemble, pivot_columns);
  std::vector<Index> history;
  const int rounds = std::min<int>(config.k, static_cast<int>(pool.size()));
  for (int r = 1; r <= rounds; ++r) {
    const ScoredRound round =
        score_round_cpi(ensemble, pivot_columns, history, config.beta, weights);
    Index best = pool.front();
    for (const Index i : pool)
      if (round.combined[static_cast<std::size_t>(i)] <
          round.combined[static_cast<std::size_t>(best)])
        best = i;

    ModuleMember member;
    member.candidate = best;
    member.iteration = r;
    member.p_value = round.combined[static_cast<std::size_t>(best)];
    for (const auto& per : round.per_semantic)
      member.per_semantic.push_back(per[static_cast<std::size_t>(best)]);
    module.members.push_back(std::move(member));
    module.weights_log.push_back(round.weights);

    history.push_back(best);
    pool.erase(std::find(pool.begin(), pool.end(), best));
  }
  return module;
}

Module detect(const SemanticsEnsemble& ensemble, const std::vector<Index>& pivots,
              const DetectionConfig& config) {
  return config.regime == Regime::CPE ? detect_cpe(ensemble, pivots, config)
                                      : detect_cpi(ensemble, pivots, config);
}

namespace {
SemanticsEnsemble single_chain(const Matrix& C) {
  SemanticsEnsemble ensemble;
  MaterializedChain chain;
  chain.values = C;
  ensemble.chains.push_back(std::move(chain));
  return ensemble;
}
}  // namespace

Module detect_cpe(const Matrix& C, const std::vector<Index>& pivots,
                  const DetectionConfig& config) {
  return detect_cpe(single_chain(C), pivots, config);
}

Module detect_cpi(const Matrix& C, const std::vector<Index>& pivot_columns,
                  const DetectionConfig& config) {
  return detect_cpi(single_chain(C), pivot_columns, config);
}

double module_valuation(const Module& module) {
  double f = 0.0;
  for (const auto& m : module.members) f += -std::log(std::max(m.p_value, kValuationFloor));
  return f;
}

}  // namespace medusa
