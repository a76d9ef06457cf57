#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "medusa/matrix_io.hpp"

namespace medusa {

// Binomial coefficient extended to the real line via the gamma function.
// Arguments where any of n+1, k+1, n-k+1 is <= 0 are out of domain:
// log_gbin returns -infinity and gbin returns 0 there.
double log_gbin(double n, double k);
double gbin(double n, double k);

// Composite Simpson quadrature with a fixed panel count (deterministic).
// Returns 0 when b <= a.
double simpson_integrate(const std::function<double(double)>& f, double a, double b,
                         int panels = 256);

// Indices of the q largest entries of row i, ties broken by ascending
// column index; returned sorted ascending.
std::vector<Index> top_q(const Matrix& C, Index i, Index q);

// Pivot bookkeeping shared by scoring and detection. Original pivots carry
// weight 1; members accreted at iteration r (1-based) carry (1-alpha)^r;
// everything else weighs 0.
struct PivotState {
  std::vector<Index> original;
  std::vector<std::pair<Index, int>> accreted;  // (row index, iteration r)
  double alpha = 0.5;

  double weight(Index i) const;
  bool contains(Index i) const;
  // (row, weight) pairs in a fixed order: originals ascending, then the
  // accretion sequence.
  std::vector<std::pair<Index, double>> weighted_rows() const;
};

struct CandidateScore {
  Index candidate = -1;
  double p_value = 1.0;
  double observed = 0.0;               // c-tilde, the observed statistic
  std::vector<Index> top_columns;      // Q_i (concentration scoring only)
};

// Concentration density of candidate row i at statistic value c, given the
// pivot state and i's strongest columns. Three-factor generalized-binomial
// product; out-of-domain factors yield 0.
double h_cpe(double c, const Matrix& C, const PivotState& pivots,
             const std::vector<Index>& top_columns, Index i);

// Tail probability of the observed or any weaker concentration: integrates
// h_cpe from the lower edge of its support up to the observed c-tilde.
// Lower values mark better candidates. Result clamped to [0, 1].
CandidateScore p_cpe(const Matrix& C, const PivotState& pivots, Index i, Index q);

// Visibility density of candidate row i at statistic value c given pivot
// columns.
double h_cpi(double c, const Matrix& C, const std::vector<Index>& pivot_columns, Index i);

// Tail probability of the observed or any stronger visibility: integrates
// h_cpi over [decay * observed mass on pivot columns, n_cols]. Lower is
// better. Result clamped to [0, 1].
CandidateScore p_cpi(const Matrix& C, const std::vector<Index>& pivot_columns, Index i,
                     double decay);

// Kullback-Leibler divergence after smoothing: adds 1e-12 to every
// component of both vectors and renormalizes each to sum 1.
double kl_divergence(const Vector& p, const Vector& q);

}  // namespace medusa
