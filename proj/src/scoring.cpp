#include "medusa/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "medusa/errors.hpp"

namespace medusa {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double log_gbin(double n, double k) {
  if (n + 1.0 <= 0.0 || k + 1.0 <= 0.0 || n - k + 1.0 <= 0.0) return -kInf;
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double gbin(double n, double k) {
  const double l = log_gbin(n, k);
  return l == -kInf ? 0.0 : std::exp(l);
}

double simpson_integrate(const std::function<double(double)>& f, double a, double b,
                         int panels) {
  if (b <= a) return 0.0;
  if (panels < 2 || panels % 2 != 0)
    throw ValidationError("simpson_integrate needs an even panel count >= 2");
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int j = 1; j < panels; ++j) sum += f(a + j * h) * (j % 2 == 1 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

std::vector<Index> top_q(const Matrix& C, Index i, Index q) {
  if (i < 0 || i >= C.rows()) throw ValidationError("row index out of range in top_q");
  if (q < 1 || q > C.cols())
    throw ValidationError("q must lie in [1, " + std::to_string(C.cols()) + "]");
  std::vector<Index> idx(static_cast<std::size_t>(C.cols()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    if (C(i, a) != C(i, b)) return C(i, a) > C(i, b);
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(q));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double PivotState::weight(Index i) const {
  for (const Index s : original)
    if (s == i) return 1.0;
  for (const auto& [s, r] : accreted)
    if (s == i) return std::pow(1.0 - alpha, r);
  return 0.0;
}

bool PivotState::contains(Index i) const {
  for (const Index s : original)
    if (s == i) return true;
  for (const auto& [s, r] : accreted)
    if (s == i) return true;
  return false;
}

std::vector<std::pair<Index, double>> PivotState::weighted_rows() const {
  std::vector<std::pair<Index, double>> out;
  out.reserve(original.size() + accreted.size());
  for (const Index s : original) out.emplace_back(s, 1.0);
  for (const auto& [s, r] : accreted) out.emplace_back(s, std::pow(1.0 - alpha, r));
  return out;
}

namespace {

struct TailStats {
  double pivot_mass = 0.0;   // A: weighted pivot mass on the statistic's support
  double reference_mass = 0.0;  // B (CPE) or the whole-matrix total (CPI)
  double row_total = 0.0;
};

double density(const TailStats& s, double c) {
  const double l1 = log_gbin(s.pivot_mass, c);
  const double l2 = log_gbin(s.reference_mass - s.pivot_mass, s.row_total - c);
  const double l3 = log_gbin(s.reference_mass, s.row_total);
  if (l1 == -kInf || l2 == -kInf || l3 == -kInf) return 0.0;
  return std::exp(l1 + l2 - l3);
}

TailStats cpe_stats(const Matrix& C, const PivotState& pivots,
                    const std::vector<Index>& top_columns, Index i) {
  TailStats s;
  for (const auto& [row, w] : pivots.weighted_rows()) {
    if (row < 0 || row >= C.rows()) throw ValidationError("pivot row out of range");
    double on_top = 0.0;
    for (const Index col : top_columns) on_top += C(row, col);
    s.pivot_mass += w * on_top;
    if (w == 1.0) s.reference_mass += C.row(row).sum();
  }
  s.row_total = C.row(i).sum();
  return s;
}

TailStats cpi_stats(const Matrix& C, const std::vector<Index>& pivot_columns, Index i) {
  TailStats s;
  for (const Index col : pivot_columns) {
    if (col < 0 || col >= C.cols()) throw ValidationError("pivot column out of range");
    s.pivot_mass += C.col(col).sum();
  }
  s.reference_mass = C.sum();
  s.row_total = C.row(i).sum();
  return s;
}

}  // namespace

double h_cpe(double c, const Matrix& C, const PivotState& pivots,
             const std::vector<Index>& top_columns, Index i) {
  return density(cpe_stats(C, pivots, top_columns, i), c);
}

CandidateScore p_cpe(const Matrix& C, const PivotState& pivots, Index i, Index q) {
  CandidateScore score;
  score.candidate = i;
  score.top_columns = top_q(C, i, q);
  const TailStats stats = cpe_stats(C, pivots, score.top_columns, i);
  double observed = 0.0;
  for (const Index col : score.top_columns) observed += C(i, col);
  score.observed = observed;
  // The density's support in c is bounded below by both c > -1 and
  // row_total - c < (B - A) + 1; integrate the weak-concentration tail from
  // that edge up to the observed statistic.
  const double lo =
      std::max(-1.0, stats.row_total - (stats.reference_mass - stats.pivot_mass) - 1.0);
  const double p =
      simpson_integrate([&](double c) { return density(stats, c); }, lo, observed);
  if (!std::isfinite(p))
    throw NumericalError("non-finite concentration tail for candidate " + std::to_string(i));
  score.p_value = std::clamp(p, 0.0, 1.0);
  return score;
}

double h_cpi(double c, const Matrix& C, const std::vector<Index>& pivot_columns, Index i) {
  return density(cpi_stats(C, pivot_columns, i), c);
}

CandidateScore p_cpi(const Matrix& C, const std::vector<Index>& pivot_columns, Index i,
                     double decay) {
  if (i < 0 || i >= C.rows()) throw ValidationError("row index out of range in p_cpi");
  if (pivot_columns.empty()) throw ValidationError("p_cpi needs at least one pivot column");
  CandidateScore score;
  score.candidate = i;
  const TailStats stats = cpi_stats(C, pivot_columns, i);
  double on_pivots = 0.0;
  for (const Index col : pivot_columns) on_pivots += C(i, col);
  score.observed = decay * on_pivots;
  const double p = simpson_integrate([&](double c) { return density(stats, c); },
                                     score.observed, static_cast<double>(C.cols()));
  if (!std::isfinite(p))
    throw NumericalError("non-finite visibility tail for candidate " + std::to_string(i));
  score.p_value = std::clamp(p, 0.0, 1.0);
  return score;
}

double kl_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw ValidationError("kl_divergence length mismatch");
  constexpr double kEps = 1e-12;
  Vector ps = p.array() + kEps;
  Vector qs = q.array() + kEps;
  ps /= ps.sum();
  qs /= qs.sum();
  return (ps.array() * (ps.array() / qs.array()).log()).sum();
}

}  // namespace medusa
