#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "medusa/detection.hpp"
#include "medusa/errors.hpp"
#include "medusa/parallel.hpp"
#include "oracle.hpp"

using namespace medusa;

namespace {

MaterializedChain wrap(const Matrix& values, const std::string& label = "test") {
  MaterializedChain m;
  m.label = label;
  m.values = values;
  return m;
}

bool same_members(const Module& a, const Module& b) {
  if (a.members.size() != b.members.size()) return false;
  for (std::size_t i = 0; i < a.members.size(); ++i) {
    if (a.members[i].candidate != b.members[i].candidate) return false;
    if (a.members[i].p_value != b.members[i].p_value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("visibility decay discounts candidates near past selections") {
  Matrix c(3, 4);
  c << 0.4, 0.3, 0.2, 0.1,
       0.4, 0.3, 0.2, 0.1,   // identical to row 0
       0.1, 0.1, 0.1, 0.7;   // far from row 0

  CHECK(visibility_decay(c, 0, {}, 0.05) == 1.0);
  // One identical previous selection: 1 - beta * exp(-0).
  CHECK(visibility_decay(c, 1, {0}, 0.05) == doctest::Approx(0.95).epsilon(1e-12));
  // A divergent candidate keeps more visibility than an identical one.
  CHECK(visibility_decay(c, 2, {0}, 0.05) > visibility_decay(c, 1, {0}, 0.05));
  // Heavy discounting clamps at zero instead of going negative.
  CHECK(visibility_decay(c, 1, {0, 0, 0, 0}, 0.9) == 0.0);
  // Older selections matter less: beta^t falls with t.
  Matrix two(3, 2);
  two << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  const double recent = 1.0 - 0.4;            // history {identical}
  const double older = 1.0 - (0.4 + 0.16);    // history {identical, identical}
  CHECK(visibility_decay(two, 0, {1}, 0.4) == doctest::Approx(recent).epsilon(1e-12));
  CHECK(visibility_decay(two, 0, {1, 2}, 0.4) == doctest::Approx(older).epsilon(1e-12));

  CHECK_THROWS_AS(visibility_decay(c, 9, {}, 0.05), ValidationError);
  CHECK_THROWS_AS(visibility_decay(c, 0, {5}, 0.05), ValidationError);
}

TEST_CASE("greedy concentration detection replays the reference simulation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix c = oracle::cpe_instance(seed);
    DetectionConfig config;
    config.regime = Regime::CPE;
    config.k = 3;
    config.alpha = 0.5;
    config.q = 2;
    const Module module = detect_cpe(c, {0, 1, 2}, config);
    const auto expected = oracle::greedy_cpe(c, {0, 1, 2}, 3, 0.5, 2);

    REQUIRE(module.members.size() == expected.size());
    for (std::size_t r = 0; r < expected.size(); ++r) {
      CHECK(module.members[r].candidate == expected[r].first);
      CHECK(module.members[r].p_value ==
            doctest::Approx(expected[r].second).epsilon(1e-12));
      CHECK(module.members[r].iteration == static_cast<int>(r) + 1);
    }
    CHECK(module_valuation(module) ==
          doctest::Approx(oracle::valuation(expected)).epsilon(1e-12));
  }
}

TEST_CASE("greedy visibility detection replays the reference simulation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix c = oracle::cpi_instance(seed);
    DetectionConfig config;
    config.regime = Regime::CPI;
    config.k = 3;
    config.beta = 0.05;
    const Module module = detect_cpi(c, {0, 1}, config);
    const auto expected = oracle::greedy_cpi(c, {0, 1}, 3, 0.05);

    REQUIRE(module.members.size() == expected.size());
    for (std::size_t r = 0; r < expected.size(); ++r) {
      CHECK(module.members[r].candidate == expected[r].first);
      CHECK(module.members[r].p_value ==
            doctest::Approx(expected[r].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("detection respects the candidate pool") {
  const Matrix c = oracle::cpe_instance(3);
  DetectionConfig config;
  config.k = 7;  // all seven non-pivot rows
  config.q = 2;
  const Module module = detect_cpe(c, {0, 1, 2}, config);
  REQUIRE(module.members.size() == 7);
  std::set<Index> seen;
  for (const auto& m : module.members) {
    CHECK(seen.insert(m.candidate).second);  // no repeats
    CHECK(m.candidate >= 3);                 // pivots never re-selected
    CHECK(m.p_value >= 0.0);
    CHECK(m.p_value <= 1.0);
  }
  // Asking beyond the pool size saturates instead of failing.
  DetectionConfig big = config;
  big.k = 50;
  CHECK(detect_cpe(c, {0, 1, 2}, big).members.size() == 7);
}

TEST_CASE("k = 0 yields an empty module") {
  const Matrix c = oracle::cpe_instance(0);
  DetectionConfig config;
  config.k = 0;
  const Module m = detect_cpe(c, {0, 1, 2}, config);
  CHECK(m.members.empty());
  CHECK(module_valuation(m) == 0.0);
}

TEST_CASE("the first selection is the pool-wide minimum p-value") {
  const Matrix c = oracle::cpe_instance(5);
  DetectionConfig config;
  config.k = 1;
  config.q = 2;
  const Module m = detect_cpe(c, {0, 1, 2}, config);
  REQUIRE(m.members.size() == 1);

  PivotState state;
  state.original = {0, 1, 2};
  state.alpha = config.alpha;
  for (Index i = 3; i < c.rows(); ++i) {
    const double p = p_cpe(c, state, i, 2).p_value;
    if (i == m.members[0].candidate)
      CHECK(p == m.members[0].p_value);
    else
      CHECK(m.members[0].p_value <= p);
  }
}

TEST_CASE("repeated visibility selections are discounted") {
  // Rows 2 and 3 are identical and dominate the pivot columns.
  Matrix c(5, 4);
  c << 0.10, 0.10, 0.40, 0.40,
       0.15, 0.15, 0.35, 0.35,
       0.45, 0.45, 0.05, 0.05,
       0.45, 0.45, 0.05, 0.05,
       0.25, 0.25, 0.25, 0.25;
  DetectionConfig with_decay;
  with_decay.regime = Regime::CPI;
  with_decay.k = 2;
  with_decay.beta = 0.5;
  DetectionConfig no_decay = with_decay;
  no_decay.beta = 0.0;

  const Module decayed = detect_cpi(c, {0, 1}, with_decay);
  const Module flat = detect_cpi(c, {0, 1}, no_decay);
  REQUIRE(decayed.members.size() == 2);
  REQUIRE(flat.members.size() == 2);
  // Both runs pick the two concentrated twins first.
  CHECK(flat.members[0].candidate == 2);
  CHECK(flat.members[1].candidate == 3);
  CHECK(decayed.members[0].candidate == 2);
  // With decay active, the twin's second-round p value is strictly worse.
  CHECK(decayed.members[1].p_value > flat.members[1].p_value);
}

TEST_CASE("an ensemble of identical semantics matches the single-chain module") {
  const Matrix c = oracle::cpe_instance(7);
  DetectionConfig single;
  single.k = 3;
  single.q = 2;
  const Module base = detect_cpe(c, {0, 1, 2}, single);

  SemanticsEnsemble twice;
  twice.chains = {wrap(c, "one"), wrap(c, "two")};
  DetectionConfig combined = single;
  combined.combination = Combination::Combined;
  const Module both = detect_cpe(twice, {0, 1, 2}, combined);

  CHECK(same_members(base, both));
  REQUIRE_FALSE(both.weights_log.empty());
  for (const auto& round : both.weights_log) {
    REQUIRE(round.size() == 2);
    CHECK(round[0] == doctest::Approx(0.5).epsilon(1e-12));  // symmetric semantics
    CHECK(round[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  for (const auto& m : both.members) REQUIRE(m.per_semantic.size() == 2);
}

TEST_CASE("concentration weights favor the semantic that ranks pivots best") {
  // Both semantics give the pivots the same strong two-column profile. In
  // "good" the pool rows concentrate on other columns, so a held-out pivot
  // ranks first. In "bad" the pool rows share the pivots' top columns at
  // weaker mass, which under the weak-tail statistic outscores the held-out
  // pivot and pushes its reciprocal rank down.
  Matrix good(10, 6), bad(10, 6);
  for (Index r = 0; r < 3; ++r) {
    good.row(r).setConstant(0.025);
    bad.row(r).setConstant(0.025);
    good(r, 0) = 0.45;
    good(r, 1) = 0.45;
    bad(r, 0) = 0.45;
    bad(r, 1) = 0.45;
  }
  for (Index r = 3; r < 10; ++r) {
    good.row(r).setConstant(0.04);
    good(r, 2 + (r % 4)) = 0.8;
    bad.row(r).setConstant(0.105);
    bad(r, 0) = 0.30;
    bad(r, 1) = 0.28;
  }
  good = oracle::row_stochastic(good);
  bad = oracle::row_stochastic(bad);

  SemanticsEnsemble ensemble;
  ensemble.chains = {wrap(good, "good"), wrap(bad, "bad")};
  PivotState state;
  state.original = {0, 1, 2};

  const std::vector<double> w = combine_weights_cpe(ensemble, state, 2);
  REQUIRE(w.size() == 2);
  CHECK(w[0] + w[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[0] > w[1]);
  CHECK(w[0] > 0.7);

  SemanticsEnsemble solo;
  solo.chains = {wrap(good, "good")};
  CHECK(combine_weights_cpe(solo, state, 2) == std::vector<double>{1.0});

  // A single original pivot cannot be held out; weights fall back to uniform.
  PivotState lone;
  lone.original = {0};
  const std::vector<double> uniform = combine_weights_cpe(ensemble, lone, 2);
  CHECK(uniform[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(uniform[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("visibility weights favor semantics with coherent pivot columns") {
  // Chain where the pivot columns carry identical profiles vs one where they
  // diverge strongly.
  Matrix coherent(6, 4);
  Matrix divergent(6, 4);
  std::mt19937_64 gen(31);
  for (Index r = 0; r < 6; ++r)
    for (Index c2 = 0; c2 < 4; ++c2) {
      coherent(r, c2) = oracle::uniform01(gen);
      divergent(r, c2) = oracle::uniform01(gen);
    }
  coherent.col(1) = coherent.col(0);          // pivot columns 0,1 identical
  divergent.col(0).setZero();
  divergent(0, 0) = 1.0;                      // pivot column 0 concentrated
  divergent.col(1).setConstant(0.25);         // pivot column 1 flat

  SemanticsEnsemble ensemble;
  ensemble.chains = {wrap(coherent, "coherent"), wrap(divergent, "divergent")};
  const std::vector<double> w = combine_weights_cpi(ensemble, {0, 1});
  REQUIRE(w.size() == 2);
  CHECK(w[0] + w[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[0] > w[1]);

  // A lone pivot column has no pairs to compare: uniform weights.
  const std::vector<double> uniform = combine_weights_cpi(ensemble, {0});
  CHECK(uniform[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("combined scoring mixes per-semantic p-values with the round weights") {
  const Matrix a = oracle::cpe_instance(13);
  const Matrix b = oracle::cpe_instance(14);
  SemanticsEnsemble ensemble;
  ensemble.chains = {wrap(a, "a"), wrap(b, "b")};
  PivotState state;
  state.original = {0, 1, 2};

  const ScoredRound round = score_round_cpe(ensemble, state, 2);
  REQUIRE(round.weights.size() == 2);
  REQUIRE(round.per_semantic.size() == 2);
  for (Index i = 0; i < a.rows(); ++i) {
    if (state.contains(i)) {
      CHECK(round.combined[static_cast<std::size_t>(i)] == 1.0);  // placeholder
      continue;
    }
    const double expected =
        round.weights[0] * round.per_semantic[0][static_cast<std::size_t>(i)] +
        round.weights[1] * round.per_semantic[1][static_cast<std::size_t>(i)];
    CHECK(round.combined[static_cast<std::size_t>(i)] ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(round.per_semantic[0][static_cast<std::size_t>(i)] ==
          doctest::Approx(p_cpe(a, state, i, 2).p_value).epsilon(1e-12));
  }
}

TEST_CASE("detection is deterministic across thread counts") {
  const Matrix a = oracle::cpe_instance(17);
  const Matrix b = oracle::cpe_instance(18);
  SemanticsEnsemble ensemble;
  ensemble.chains = {wrap(a, "a"), wrap(b, "b")};
  DetectionConfig config;
  config.k = 4;
  config.q = 2;
  config.combination = Combination::Combined;

  set_thread_count(1);
  const Module serial = detect_cpe(ensemble, {0, 1, 2}, config);
  set_thread_count(4);
  const Module threaded = detect_cpe(ensemble, {0, 1, 2}, config);
  set_thread_count(0);

  CHECK(same_members(serial, threaded));
  REQUIRE(serial.weights_log.size() == threaded.weights_log.size());
  for (std::size_t r = 0; r < serial.weights_log.size(); ++r)
    CHECK(serial.weights_log[r] == threaded.weights_log[r]);
}

TEST_CASE("module valuation sums the log-improbabilities of its members") {
  const Matrix c = oracle::cpe_instance(2);
  DetectionConfig config;
  config.k = 3;
  config.q = 2;
  const Module m = detect_cpe(c, {0, 1, 2}, config);
  double expected = 0.0;
  for (const auto& member : m.members)
    expected += -std::log(std::max(member.p_value, 1e-300));
  CHECK(module_valuation(m) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("detection validates its configuration") {
  const Matrix c = oracle::cpe_instance(1);
  DetectionConfig config;
  config.k = 2;

  DetectionConfig bad_alpha = config;
  bad_alpha.alpha = 1.0;
  CHECK_THROWS_AS(detect_cpe(c, {0, 1}, bad_alpha), ValidationError);
  bad_alpha.alpha = -0.1;
  CHECK_THROWS_AS(detect_cpe(c, {0, 1}, bad_alpha), ValidationError);

  DetectionConfig bad_q = config;
  bad_q.q = 0;
  CHECK_THROWS_AS(detect_cpe(c, {0, 1}, bad_q), ValidationError);
  bad_q.q = 7;  // matrix has 6 columns
  CHECK_THROWS_AS(detect_cpe(c, {0, 1}, bad_q), ValidationError);

  DetectionConfig bad_beta = config;
  bad_beta.regime = Regime::CPI;
  bad_beta.beta = 1.0;
  CHECK_THROWS_AS(detect_cpi(c, {0, 1}, bad_beta), ValidationError);

  CHECK_THROWS_AS(detect_cpe(c, {}, config), ValidationError);
  CHECK_THROWS_AS(detect_cpe(c, {0, 25}, config), ValidationError);

  DetectionConfig negative = config;
  negative.k = -1;
  CHECK_THROWS_AS(detect_cpe(c, {0, 1}, negative), ValidationError);

  // Every row as pivot leaves nothing to select from.
  std::vector<Index> everyone;
  for (Index i = 0; i < c.rows(); ++i) everyone.push_back(i);
  CHECK_THROWS_AS(detect_cpe(c, everyone, config), ValidationError);

  // Two semantics require combined mode.
  SemanticsEnsemble two;
  two.chains = {wrap(c, "a"), wrap(oracle::cpe_instance(4), "b")};
  CHECK_THROWS_AS(detect_cpe(two, {0, 1}, config), ValidationError);

  // Mismatched candidate spaces are rejected.
  SemanticsEnsemble mismatched;
  Matrix small(4, 6);
  small.setConstant(1.0 / 6.0);
  mismatched.chains = {wrap(c, "a"), wrap(small, "b")};
  DetectionConfig combined = config;
  combined.combination = Combination::Combined;
  CHECK_THROWS_AS(detect_cpe(mismatched, {0, 1}, combined), ValidationError);

  // The dispatcher routes on the regime.
  DetectionConfig cpi = config;
  cpi.regime = Regime::CPI;
  SemanticsEnsemble solo;
  solo.chains = {wrap(c, "a")};
  const Module via_dispatch = detect(solo, {0, 1}, cpi);
  const Module direct = detect_cpi(c, {0, 1}, cpi);
  CHECK(same_members(via_dispatch, direct));
}
