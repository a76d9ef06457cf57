#include "medusa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include "medusa/chains.hpp"
#include "medusa/errors.hpp"

namespace medusa {

namespace {

constexpr double kValuationFloor = 1e-300;

void check_classes(std::size_t n_pos, std::size_t n_neg) {
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("ranking metrics need at least one positive and one negative");
}

double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace

double auroc(const std::vector<std::pair<double, bool>>& scores) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& [v, pos] : scores) (pos ? n_pos : n_neg)++;
  check_classes(n_pos, n_neg);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].first < scores[b].first; });

  // Average ranks over tie groups, then the Mann-Whitney rank-sum statistic.
  std::vector<double> rank(scores.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]].first == scores[order[i]].first) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t s = 0; s < scores.size(); ++s)
    if (scores[s].second) rank_sum_pos += rank[s];
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return 1.0 - u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<std::pair<double, bool>>& scores) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& [v, pos] : scores) (pos ? n_pos : n_neg)++;
  check_classes(n_pos, n_neg);

  std::vector<std::pair<double, bool>> sorted = scores;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double hits = 0.0, average_precision = 0.0;
  for (std::size_t r = 0; r < sorted.size(); ++r) {
    if (!sorted[r].second) continue;
    hits += 1.0;
    average_precision += hits / static_cast<double>(r + 1);
  }
  return average_precision / static_cast<double>(n_pos);
}

RankingMetrics ranking_metrics(const std::vector<std::pair<double, bool>>& scores) {
  RankingMetrics m;
  for (const auto& [v, pos] : scores) (pos ? m.n_pos : m.n_neg)++;
  check_classes(m.n_pos, m.n_neg);
  m.auroc = auroc(scores);
  m.auprc = auprc(scores);
  return m;
}

LatentModel fit_pipeline(const FusionGraph& graph, const PipelineConfig& config) {
  const FusionGraph prepared = config.normalize ? normalize_graph(graph) : graph;
  return factorize(prepared, select_ranks(prepared, config.rank_fraction),
                   config.factorization);
}

SemanticsEnsemble build_ensemble(const LatentModel& model,
                                 const std::vector<std::string>& chain_specs) {
  if (chain_specs.empty()) throw ValidationError("at least one chain spec required");
  SemanticsEnsemble ensemble;
  for (const auto& spec : chain_specs) {
    const Chain chain = parse_chain_spec(model.schema, spec);
    if (!ensemble.chains.empty() &&
        chain.source_type != ensemble.chains.front().chain.source_type)
      throw ValidationError("semantics must share the source type; " + spec + " starts at " +
                            chain.source_type);
    ensemble.chains.push_back(materialize(model, chain));
  }
  return ensemble;
}

std::vector<std::pair<double, bool>> association_score_pairs(const SemanticsEnsemble& ensemble,
                                                             const LoocvCase& item,
                                                             const DetectionConfig& config) {
  const Index n = ensemble.chains.front().values.rows();
  std::set<Index> positive_set;
  for (const Index p : item.positives) {
    if (p < 0 || p >= n)
      throw ValidationError("case " + item.id + ": positive row out of range");
    positive_set.insert(p);
  }

  std::vector<std::pair<double, bool>> pairs;
  if (config.regime == Regime::CPE) {
    for (const Index held : positive_set) {
      PivotState state;
      state.alpha = config.alpha;
      for (const Index p : positive_set)
        if (p != held) state.original.push_back(p);
      const ScoredRound round = score_round_cpe(ensemble, state, config.q);
      pairs.emplace_back(round.combined[static_cast<std::size_t>(held)], true);
      for (Index j = 0; j < n; ++j)
        if (!positive_set.count(j))
          pairs.emplace_back(round.combined[static_cast<std::size_t>(j)], false);
    }
  } else {
    const std::vector<double> weights =
        ensemble.chains.size() == 1 ? std::vector<double>{1.0}
                                    : combine_weights_cpi(ensemble, item.pivot_columns);
    const ScoredRound round =
        score_round_cpi(ensemble, item.pivot_columns, {}, config.beta, weights);
    for (Index j = 0; j < n; ++j)
      pairs.emplace_back(round.combined[static_cast<std::size_t>(j)],
                         positive_set.count(j) > 0);
  }
  return pairs;
}

std::vector<CaseMetrics> loocv_association(const SemanticsEnsemble& ensemble,
                                           const std::vector<LoocvCase>& cases,
                                           const DetectionConfig& config) {
  std::vector<CaseMetrics> out;
  const Index n = ensemble.chains.front().values.rows();
  for (const auto& item : cases) {
    CaseMetrics cm;
    cm.id = item.id;
    for (const Index p : item.positives)
      if (p < 0 || p >= n)
        throw ValidationError("case " + item.id + ": positive row out of range");
    const std::set<Index> distinct(item.positives.begin(), item.positives.end());
    const bool enough = config.regime == Regime::CPE
                            ? distinct.size() >= 2
                            : !distinct.empty() && !item.pivot_columns.empty();
    // A case also needs at least one negative row to rank against.
    const bool viable = enough && static_cast<Index>(distinct.size()) < n;
    if (!viable) {
      std::cerr << "warning: case " << item.id << " skipped (insufficient positives or pivots)\n";
      cm.skipped = true;
      out.push_back(std::move(cm));
      continue;
    }
    cm.metrics = ranking_metrics(association_score_pairs(ensemble, item, config));
    out.push_back(std::move(cm));
  }
  return out;
}

std::vector<CaseMetrics> loocv_association(const FusionGraph& graph,
                                           const std::vector<LoocvCase>& cases,
                                           const PipelineConfig& config) {
  const LatentModel model = fit_pipeline(graph, config);
  return loocv_association(build_ensemble(model, config.chains), cases, config.detection);
}

std::optional<RecoveryReport> module_recovery(const SemanticsEnsemble& ensemble,
                                              const std::vector<Index>& truth_module,
                                              double fraction, const DetectionConfig& config,
                                              std::uint64_t removal_seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError("removal fraction must lie in (0, 1)");
  if (config.regime != Regime::CPE)
    throw ValidationError("module recovery is defined for the concentration regime");
  std::set<Index> truth_set(truth_module.begin(), truth_module.end());
  if (truth_set.size() < 4) throw ValidationError("truth module needs at least 4 members");

  std::vector<Index> shuffled(truth_set.begin(), truth_set.end());
  const std::size_t n_remove =
      static_cast<std::size_t>(fraction * static_cast<double>(shuffled.size()));
  if (n_remove == 0) return std::nullopt;

  // Dedicated generator so removal is independent of factorization seeding.
  std::mt19937_64 gen(removal_seed);
  for (std::size_t i = 0; i < n_remove; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(gen() % static_cast<std::uint64_t>(shuffled.size() - i));
    std::swap(shuffled[i], shuffled[j]);
  }
  std::vector<Index> held_out(shuffled.begin(),
                              shuffled.begin() + static_cast<std::ptrdiff_t>(n_remove));
  std::sort(held_out.begin(), held_out.end());
  std::vector<Index> pivots(shuffled.begin() + static_cast<std::ptrdiff_t>(n_remove),
                            shuffled.end());
  std::sort(pivots.begin(), pivots.end());

  DetectionConfig full_size = config;
  full_size.k = static_cast<int>(truth_set.size());
  RecoveryReport report;
  report.removal_fraction = fraction;
  report.held_out = held_out;
  report.module = detect_cpe(ensemble, pivots, full_size);
  std::size_t recovered = 0;
  for (const auto& m : report.module.members)
    if (std::binary_search(held_out.begin(), held_out.end(), m.candidate)) ++recovered;
  report.recall_at_k = static_cast<double>(recovered) / static_cast<double>(held_out.size());
  return report;
}

std::optional<RecoveryReport> module_recovery(const FusionGraph& graph,
                                              const std::vector<Index>& truth_module,
                                              double fraction, const PipelineConfig& config,
                                              std::uint64_t removal_seed) {
  const LatentModel model = fit_pipeline(graph, config);
  return module_recovery(build_ensemble(model, config.chains), truth_module, fraction,
                         config.detection, removal_seed);
}

BruteForceResult brute_force_best_module(const Matrix& C, const std::vector<Index>& pivots,
                                         int k, Regime regime, const DetectionConfig& config) {
  if (k < 1 || k > 3) throw ValidationError("brute force search supports k in [1, 3]");
  std::vector<Index> candidates;
  if (regime == Regime::CPE) {
    std::set<Index> pivot_set(pivots.begin(), pivots.end());
    for (Index i = 0; i < C.rows(); ++i)
      if (!pivot_set.count(i)) candidates.push_back(i);
  } else {
    for (Index i = 0; i < C.rows(); ++i) candidates.push_back(i);
  }
  if (candidates.size() > 12)
    throw ValidationError("brute force search supports at most 12 candidates, got " +
                          std::to_string(candidates.size()));
  if (static_cast<std::size_t>(k) > candidates.size())
    throw ValidationError("k exceeds the candidate pool");

  BruteForceResult best;
  best.valuation = -1.0;
  std::vector<Index> order;
  std::vector<bool> taken(candidates.size(), false);

  auto extend = [&](auto&& self, double f, const PivotState& state,
                    const std::vector<Index>& history) -> void {
    if (static_cast<int>(order.size()) == k) {
      if (f > best.valuation) {
        best.valuation = f;
        best.members = order;
      }
      return;
    }
    const int r = static_cast<int>(order.size()) + 1;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (taken[ci]) continue;
      const Index i = candidates[ci];
      double p;
      PivotState next_state = state;
      std::vector<Index> next_history = history;
      if (regime == Regime::CPE) {
        p = p_cpe(C, state, i, config.q).p_value;
        next_state.accreted.emplace_back(i, r);
      } else {
        p = p_cpi(C, pivots, i, visibility_decay(C, i, history, config.beta)).p_value;
        next_history.push_back(i);
      }
      taken[ci] = true;
      order.push_back(i);
      self(self, f - std::log(std::max(p, kValuationFloor)), next_state, next_history);
      order.pop_back();
      taken[ci] = false;
    }
  };

  PivotState initial;
  initial.alpha = config.alpha;
  if (regime == Regime::CPE) {
    initial.original = pivots;
    std::sort(initial.original.begin(), initial.original.end());
  }
  extend(extend, 0.0, initial, {});
  return best;
}

std::pair<FusionGraph, PlantedTruth> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_genes < 1 || spec.n_terms < 1 || spec.n_chems < 1 || spec.n_diseases < 3)
    throw ValidationError("synthetic spec needs n_genes/n_terms/n_chems >= 1, n_diseases >= 3");
  if (!(spec.edge_density > 0.0) || spec.edge_density > 1.0)
    throw ValidationError("edge density must lie in (0, 1]");
  if (spec.planted_size < 1 || spec.planted_size > spec.n_genes)
    throw ValidationError("planted size must lie in [1, n_genes]");
  if (spec.signal < 0.0) throw ValidationError("signal strength must be >= 0");

  constexpr Index kComponents = 4;
  std::mt19937_64 gen(spec.seed);

  // Latent profiles; designated rows get a signal-scaled lift on component 0.
  // The lift multiplier is always drawn so the stream position does not
  // depend on the signal strength.
  auto draw_factor = [&](Index n, Index n_lifted) {
    Matrix u(n, kComponents);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < kComponents; ++j) u(i, j) = uniform01(gen);
    for (Index i = 0; i < n_lifted; ++i)
      u(i, 0) += spec.signal * (0.8 + 0.4 * uniform01(gen));
    return u;
  };

  const Index n_signal_chems = std::max<Index>(1, spec.n_chems / 3);
  const Matrix u_gene = draw_factor(spec.n_genes, spec.planted_size);
  const Matrix u_term = draw_factor(spec.n_terms, 0);
  const Matrix u_chem = draw_factor(spec.n_chems, n_signal_chems);
  const Matrix u_disease = draw_factor(spec.n_diseases, 3);

  auto build_edge = [&](const Matrix* left, const Matrix* right, Index rows, Index cols) {
    Matrix base = left != nullptr ? Matrix(*left * right->transpose()) : Matrix();
    std::vector<Eigen::Triplet<double>> triplets;
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) {
        const double noise = uniform01(gen);
        const double gate = uniform01(gen);
        const double value = left != nullptr ? base(i, j) + 0.25 * noise : noise;
        if (gate < spec.edge_density) triplets.emplace_back(i, j, value);
      }
    SparseMatrix m(rows, cols);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
  };

  std::vector<RelationMatrix> relations;
  relations.push_back(
      {"g_c", "gene", "chem", build_edge(&u_gene, &u_chem, spec.n_genes, spec.n_chems)});
  relations.push_back(
      {"g_t", "gene", "term", build_edge(nullptr, nullptr, spec.n_genes, spec.n_terms)});
  relations.push_back(
      {"c_d", "chem", "disease", build_edge(&u_chem, &u_disease, spec.n_chems, spec.n_diseases)});
  relations.push_back(
      {"t_d", "term", "disease", build_edge(nullptr, nullptr, spec.n_terms, spec.n_diseases)});

  auto labels = [](const std::string& prefix, Index n) {
    std::vector<std::string> out;
    for (Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
  };
  std::vector<ObjectType> types = {{"gene", labels("g", spec.n_genes)},
                                   {"term", labels("t", spec.n_terms)},
                                   {"chem", labels("c", spec.n_chems)},
                                   {"disease", labels("d", spec.n_diseases)}};

  PlantedTruth truth;
  for (Index i = 0; i < spec.planted_size; ++i) truth.module_rows.push_back(i);
  truth.pivot_columns = {0, 1, 2};
  return {FusionGraph(std::move(types), std::move(relations), {}), std::move(truth)};
}

ParameterGrid default_parameter_grid() {
  return {{0.25, 0.5, 0.75}, {0.01, 0.05, 0.1}, {5, 10, 20}};
}

GridSearchResult grid_search(const FusionGraph& graph, const std::vector<LoocvCase>& cases,
                             const PipelineConfig& base, const ParameterGrid& grid) {
  if (grid.alphas.empty() || grid.betas.empty() || grid.qs.empty())
    throw ValidationError("parameter grid must be non-empty in every dimension");
  const LatentModel model = fit_pipeline(graph, base);
  const SemanticsEnsemble ensemble = build_ensemble(model, base.chains);

  GridSearchResult best;
  double best_mean = -1.0;
  for (const double alpha : grid.alphas)
    for (const double beta : grid.betas)
      for (const Index q : grid.qs) {
        DetectionConfig config = base.detection;
        config.alpha = alpha;
        config.beta = beta;
        config.q = q;
        const auto metrics = loocv_association(ensemble, cases, config);
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto& cm : metrics) {
          if (cm.skipped) continue;
          sum += cm.metrics.auroc;
          ++used;
        }
        if (used == 0) continue;
        const double mean = sum / static_cast<double>(used);
        if (mean > best_mean) {
          best_mean = mean;
          best = {alpha, beta, q, mean};
        }
      }
  if (best_mean < 0.0) throw ValidationError("no grid point produced evaluable cases");
  return best;
}

}  // namespace medusa
