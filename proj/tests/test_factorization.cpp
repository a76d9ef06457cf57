#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "medusa/errors.hpp"
#include "medusa/factorization.hpp"
#include "medusa/parallel.hpp"
#include "test_helpers.hpp"

using namespace medusa;

namespace {

FusionGraph toy_graph() {
  return FusionGraph::load(testutil::data_dir() / "toy" / "manifest.json");
}

bool models_identical(const LatentModel& a, const LatentModel& b) {
  if (a.fit_log != b.fit_log) return false;
  for (const auto& [type, g] : a.factors)
    if (g != b.factors.at(type)) return false;
  for (const auto& [edge, s] : a.interactions)
    if (s != b.interactions.at(edge)) return false;
  return true;
}

// Straight-loop transcription of the fitting objective: squared residual
// per relation plus the constraint trace penalty.
double objective_by_hand(const FusionGraph& graph, const LatentModel& model) {
  double total = 0.0;
  for (const auto& rel : graph.relations()) {
    const Matrix r = Matrix(rel.values);
    const Matrix rhat = model.factors.at(rel.source) * model.interactions.at(rel.edge_id) *
                        model.factors.at(rel.target).transpose();
    for (Index i = 0; i < r.rows(); ++i)
      for (Index j = 0; j < r.cols(); ++j) {
        const double d = r(i, j) - rhat(i, j);
        total += d * d;
      }
  }
  for (const auto& con : graph.constraints()) {
    const Matrix theta = Matrix(con.values);
    const Matrix& g = model.factors.at(con.type);
    for (Index a = 0; a < theta.rows(); ++a)
      for (Index b = 0; b < theta.cols(); ++b)
        for (Index c = 0; c < g.cols(); ++c) total += g(a, c) * theta(a, b) * g(b, c);
  }
  return total;
}

}  // namespace

TEST_CASE("select_ranks rounds the fraction per type and clamps to valid range") {
  const FusionGraph g = toy_graph();

  const RankSpec full = select_ranks(g, 1.0);
  CHECK(full.ranks.at("gene") == 9);
  CHECK(full.ranks.at("symptom") == 4);

  const RankSpec frac = select_ranks(g, 0.4);
  CHECK(frac.ranks.at("gene") == 4);      // round(3.6)
  CHECK(frac.ranks.at("chemical") == 3);  // round(2.8)
  CHECK(frac.ranks.at("symptom") == 2);   // round(1.6)

  const RankSpec tiny = select_ranks(g, 0.01);
  for (const auto& [type, k] : tiny.ranks) CHECK(k == 1);  // floor of max(1, .)

  CHECK_THROWS_AS(select_ranks(g, 0.0), ValidationError);
  CHECK_THROWS_AS(select_ranks(g, -0.2), ValidationError);
  CHECK_THROWS_AS(select_ranks(g, 1.5), ValidationError);
}

TEST_CASE("factorize validates ranks and iteration count") {
  const FusionGraph g = toy_graph();
  FactorizationOptions opt;
  opt.max_iterations = 1;

  RankSpec missing = select_ranks(g, 0.4);
  missing.ranks.erase("gene");
  CHECK_THROWS_AS(factorize(g, missing, opt), ValidationError);

  RankSpec oversized = select_ranks(g, 0.4);
  oversized.ranks["symptom"] = 10;
  CHECK_THROWS_AS(factorize(g, oversized, opt), ValidationError);

  RankSpec zero = select_ranks(g, 0.4);
  zero.ranks["gene"] = 0;
  CHECK_THROWS_AS(factorize(g, zero, opt), ValidationError);

  RankSpec unknown = select_ranks(g, 0.4);
  unknown.ranks["martian"] = 2;
  CHECK_THROWS_WITH_AS(factorize(g, unknown, opt), doctest::Contains("martian"),
                       ValidationError);

  RankSpec ok = select_ranks(g, 0.4);
  FactorizationOptions bad = opt;
  bad.max_iterations = -1;
  CHECK_THROWS_AS(factorize(g, ok, bad), ValidationError);
}

TEST_CASE("objective matches an independent dense transcription") {
  const FusionGraph g = toy_graph();
  FactorizationOptions opt;
  opt.max_iterations = 7;
  opt.seed = 3;
  const LatentModel model = factorize(g, select_ranks(g, 0.4), opt);
  const double lib = objective(g, model);
  const double hand = objective_by_hand(g, model);
  CHECK(lib == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("factor entries stay non-negative and shapes follow the ranks") {
  const FusionGraph g = toy_graph();
  FactorizationOptions opt;
  opt.max_iterations = 25;
  opt.seed = 11;
  const RankSpec ranks = select_ranks(g, 0.4);
  const LatentModel model = factorize(g, ranks, opt);
  for (const auto& type : g.types()) {
    const Matrix& f = model.factors.at(type.id);
    CHECK(f.rows() == type.size());
    CHECK(f.cols() == ranks.ranks.at(type.id));
    CHECK(f.minCoeff() >= 0.0);
  }
  for (const auto& rel : g.relations()) {
    const Matrix& s = model.interactions.at(rel.edge_id);
    CHECK(s.rows() == ranks.ranks.at(rel.source));
    CHECK(s.cols() == ranks.ranks.at(rel.target));
  }
}

TEST_CASE("objective decreases monotonically on random graphs") {
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL, 3ULL}) {
    auto [graph, ranks] = fixtures::random_fusion_graph(seed);
    FactorizationOptions opt;
    opt.max_iterations = 40;
    opt.rel_tolerance = 0.0;
    opt.seed = seed;
    const LatentModel model = factorize(graph, ranks, opt);
    REQUIRE(model.fit_log.size() == 41);
    for (std::size_t i = 1; i < model.fit_log.size(); ++i) {
      const double slack = 1e-9 * std::max(1.0, std::abs(model.fit_log[i - 1]));
      CHECK(model.fit_log[i] <= model.fit_log[i - 1] + slack);
    }
    CHECK(model.final_objective == model.fit_log.back());
  }
}

TEST_CASE("tolerance stops the sweep early") {
  const FusionGraph g = toy_graph();
  FactorizationOptions loose;
  loose.max_iterations = 500;
  loose.rel_tolerance = 1e-2;
  loose.seed = 5;
  const LatentModel model = factorize(g, select_ranks(g, 0.4), loose);
  CHECK(model.fit_log.size() < 501);
}

TEST_CASE("exactly low-rank data is recovered to numerical precision") {
  auto [graph, ranks] = fixtures::planted_low_rank_graph(42);
  FactorizationOptions opt;
  opt.max_iterations = 500;
  opt.rel_tolerance = 1e-13;
  opt.seed = 1;
  opt.init = InitScheme::RandomAcol;
  const LatentModel model = factorize(graph, ranks, opt);
  CHECK(fixtures::relative_reconstruction_error(graph, model) < 1e-6);
}

TEST_CASE("fits are deterministic for a fixed seed and any thread count") {
  const FusionGraph g = toy_graph();
  FactorizationOptions opt;
  opt.max_iterations = 20;
  opt.seed = 9;

  set_thread_count(1);
  const LatentModel serial = factorize(g, select_ranks(g, 0.4), opt);
  set_thread_count(4);
  const LatentModel threaded = factorize(g, select_ranks(g, 0.4), opt);
  set_thread_count(0);
  CHECK(models_identical(serial, threaded));

  FactorizationOptions other = opt;
  other.seed = 10;
  const LatentModel different = factorize(g, select_ranks(g, 0.4), other);
  CHECK_FALSE(models_identical(serial, different));
}

TEST_CASE("initialization schemes genuinely differ") {
  const FusionGraph g = toy_graph();
  FactorizationOptions uniform;
  uniform.max_iterations = 0;
  uniform.seed = 4;
  FactorizationOptions acol = uniform;
  acol.init = InitScheme::RandomAcol;
  const LatentModel mu = factorize(g, select_ranks(g, 0.4), uniform);
  const LatentModel ma = factorize(g, select_ranks(g, 0.4), acol);
  CHECK_FALSE(models_identical(mu, ma));
  for (const auto& [type, f] : ma.factors) CHECK(f.minCoeff() >= 0.0);
}

TEST_CASE("reconstruct rejects unknown relations") {
  const FusionGraph g = toy_graph();
  FactorizationOptions opt;
  opt.max_iterations = 2;
  const LatentModel model = factorize(g, select_ranks(g, 0.4), opt);
  CHECK_THROWS_AS(reconstruct(model, "nope"), ValidationError);
  const Matrix r = reconstruct(model, "g_ch");
  CHECK(r.rows() == 9);
  CHECK(r.cols() == 7);
}

TEST_CASE("models save and load without loss") {
  const FusionGraph g = toy_graph();
  FactorizationOptions opt;
  opt.max_iterations = 15;
  opt.seed = 21;
  opt.init = InitScheme::RandomAcol;
  const LatentModel model = factorize(g, select_ranks(g, 0.4), opt);

  testutil::TempDir dir;
  const auto first = dir.path() / "m1";
  const auto second = dir.path() / "m2";
  save_model(model, first);
  const LatentModel back = load_model(first);

  CHECK(models_identical(model, back));
  CHECK(back.final_objective == model.final_objective);
  CHECK(back.options.seed == 21);
  CHECK(back.options.init == InitScheme::RandomAcol);
  CHECK(back.ranks.ranks == model.ranks.ranks);
  CHECK(back.schema.types.size() == model.schema.types.size());
  CHECK(back.schema.type("gene").labels == model.schema.type("gene").labels);

  // Serialization is byte-stable across a round trip.
  save_model(back, second);
  for (const auto& entry : std::filesystem::directory_iterator(first)) {
    CHECK(testutil::read_file(entry.path()) ==
          testutil::read_file(second / entry.path().filename()));
  }

  CHECK_THROWS_AS(load_model(dir.path() / "absent"), ValidationError);
}
