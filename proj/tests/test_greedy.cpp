#include <catch2/catch_amalgamated.hpp>

#include "qsel/greedy.hpp"
#include "test_util.hpp"

using namespace qsel;

namespace {

// a stiff field penalty keeps the optimized fields small, which keeps the
// fitting landscape in alpha mild enough for a modest multistart budget
ProblemContext small_context(Rng& rng) {
  TimeGrid grid(8.0, 100);
  return ProblemContext(testutil::random_hermitian(rng, 3), testutil::random_state(rng, 3),
                        testutil::random_state(rng, 3), grid, 0.5);
}

MonotonicSettings quick_mono() {
  MonotonicSettings s;
  s.beta = 0.5;
  s.max_iters = 40;
  return s;
}

MultistartSettings quick_lsq(std::uint64_t seed) {
  MultistartSettings s;
  s.restarts = 10;
  s.max_evals = 800;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("a single basis element produces a single transfer field") {
  Rng rng(111);
  ProblemContext ctx = small_context(rng);
  std::vector<HermitianOperator> basis = {testutil::random_hermitian(rng, 3)};
  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(1));
  REQUIRE(set.fields.size() == 1);
  REQUIRE(set.traces.size() == 1);
  REQUIRE(set.fit_coefficients.empty());
  REQUIRE(set.fit_costs.empty());
  REQUIRE(set.warnings.empty());
  REQUIRE(set.fields[0].grid == ctx.grid);
}

TEST_CASE("set sizes track the basis length") {
  Rng rng(113);
  ProblemContext ctx = small_context(rng);
  std::vector<HermitianOperator> basis = {testutil::random_hermitian(rng, 3),
                                          testutil::random_hermitian(rng, 3),
                                          testutil::random_hermitian(rng, 3)};
  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(2));
  REQUIRE(set.fields.size() == 3);
  REQUIRE(set.traces.size() == 3);
  REQUIRE(set.fit_coefficients.size() == 2);
  REQUIRE(set.fit_costs.size() == 2);
  for (int k = 0; k < 2; ++k) REQUIRE(set.fit_coefficients[k].size() == k + 1);
}

TEST_CASE("an element adding no information raises a warning") {
  Rng rng(127);
  ProblemContext ctx = small_context(rng);
  // the zero coupling is trivially inside any span and no field can expose it
  std::vector<HermitianOperator> basis = {HermitianOperator::zero(3), HermitianOperator::zero(3)};
  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(3));
  REQUIRE(set.warnings.size() == 1);
  REQUIRE(set.warnings[0].find("element 2") != std::string::npos);
}

TEST_CASE("duplicated couplings fit each other exactly") {
  Rng rng(131);
  ProblemContext ctx = small_context(rng);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  std::vector<HermitianOperator> basis = {mu, mu};
  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(5));
  REQUIRE(set.fit_costs[0] < 1e-8);
  REQUIRE(set.fit_coefficients[0][0] == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("the fitted weight beats a dense one-dimensional scan") {
  Rng rng(137);
  ProblemContext ctx = small_context(rng);
  HermitianOperator m1 = testutil::random_hermitian(rng, 3);
  std::vector<HermitianOperator> basis = {m1, HermitianOperator(1.3 * m1.matrix())};
  std::vector<ControlField> fields = {testutil::random_field(rng, ctx.grid, 0.6)};

  FitResult fit = fit_alpha(ctx, basis, 2, fields, quick_lsq(7));

  double best_scan = std::numeric_limits<double>::infinity();
  double best_alpha = 0.0;
  RealVector a(1);
  for (int i = 0; i <= 2000; ++i) {
    a[0] = -3.0 + 6.0 * i / 2000.0;
    double c = fitting_cost(ctx, basis, 2, a, fields);
    if (c < best_scan) {
      best_scan = c;
      best_alpha = a[0];
    }
  }
  REQUIRE(fit.cost <= best_scan + 1e-12);
  REQUIRE(fit.alpha.values[0] == Catch::Approx(best_alpha).margin(2.0 * 6.0 / 2000.0));
  REQUIRE(fit.alpha.values[0] == Catch::Approx(1.3).margin(1e-5));
}

TEST_CASE("rescaling a span element inversely rescales its weight") {
  Rng rng(139);
  ProblemContext ctx = small_context(rng);
  HermitianOperator m1 = testutil::random_hermitian(rng, 3);
  HermitianOperator target(0.8 * m1.matrix());
  std::vector<ControlField> fields = {testutil::random_field(rng, ctx.grid, 0.6)};

  FitResult plain = fit_alpha(ctx, {m1, target}, 2, fields, quick_lsq(9));
  FitResult scaled = fit_alpha(ctx, {HermitianOperator(2.0 * m1.matrix()), target}, 2, fields,
                               quick_lsq(9));
  REQUIRE(plain.alpha.values[0] == Catch::Approx(0.8).margin(1e-6));
  REQUIRE(scaled.alpha.values[0] == Catch::Approx(0.4).margin(1e-6));
}

TEST_CASE("greedy precomputation is deterministic in its seeds") {
  Rng rng(149);
  ProblemContext ctx = small_context(rng);
  std::vector<HermitianOperator> basis = {testutil::random_hermitian(rng, 3),
                                          testutil::random_hermitian(rng, 3)};
  SelectiveFieldSet s1 = greedy_fields(ctx, basis, quick_mono(), quick_lsq(11));
  SelectiveFieldSet s2 = greedy_fields(ctx, basis, quick_mono(), quick_lsq(11));
  for (size_t k = 0; k < s1.fields.size(); ++k)
    REQUIRE(s1.fields[k].samples == s2.fields[k].samples);
  REQUIRE(s1.fit_coefficients[0] == s2.fit_coefficients[0]);
}

TEST_CASE("spectral relative error behaves like a metric ratio") {
  Rng rng(151);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  REQUIRE(relative_error(mu, mu) == 0.0);
  REQUIRE(relative_error(mu, HermitianOperator(2.0 * mu.matrix())) == Catch::Approx(1.0).epsilon(1e-12));
  HermitianOperator other = testutil::random_hermitian(rng, 2);
  REQUIRE_THROWS_AS(relative_error(mu, other), std::invalid_argument);
  REQUIRE_THROWS_AS(relative_error(HermitianOperator::zero(3), mu), std::invalid_argument);
}

TEST_CASE("a basis element acting alone is identified exactly") {
  Rng rng(157);
  ProblemContext ctx = small_context(rng);
  std::vector<HermitianOperator> basis = {testutil::random_hermitian(rng, 3),
                                          testutil::random_hermitian(rng, 3)};
  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(13));

  std::vector<Complex> measurements;
  for (const auto& f : set.fields) measurements.push_back(measure_phi(ctx, basis[0], f));

  IdentificationResult r = identify(ctx, set, measurements, quick_lsq(17));
  REQUIRE(r.residual < 1e-12);
  REQUIRE(r.alpha.values[0] == Catch::Approx(1.0).margin(1e-5));
  REQUIRE(std::abs(r.alpha.values[1]) < 1e-5);
  REQUIRE(relative_error(basis[0], r.mu_hat) < 1e-5);
}

TEST_CASE("in-span couplings round trip through identification") {
  Rng rng(163);
  ProblemContext ctx = small_context(rng);
  std::vector<HermitianOperator> basis = {testutil::random_hermitian(rng, 3),
                                          testutil::random_hermitian(rng, 3)};
  RealVector truth(2);
  truth << 0.3, -0.7;
  HermitianOperator mu_star = combine(basis, truth);

  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(19));
  std::vector<Complex> measurements;
  for (const auto& f : set.fields) measurements.push_back(measure_phi(ctx, mu_star, f));

  IdentificationResult r = identify(ctx, set, measurements, quick_lsq(23));
  REQUIRE(r.residual < 1e-12);
  REQUIRE((r.alpha.values - truth).norm() < 1e-5);
  REQUIRE(relative_error(mu_star, r.mu_hat) < 1e-6);
  // real combinations of exactly Hermitian matrices stay exactly Hermitian
  REQUIRE((r.mu_hat.matrix() - r.mu_hat.matrix().adjoint()).norm() == 0.0);
}

TEST_CASE("measurement noise moves the identified weights gently") {
  Rng rng(167);
  ProblemContext ctx = small_context(rng);
  std::vector<HermitianOperator> basis = {testutil::random_hermitian(rng, 3),
                                          testutil::random_hermitian(rng, 3)};
  RealVector truth(2);
  truth << 0.9, 0.4;
  HermitianOperator mu_star = combine(basis, truth);

  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(29));
  const double sigma = 1e-3;
  Rng noise(31);
  std::vector<Complex> measurements;
  for (const auto& f : set.fields)
    measurements.push_back(measure_phi(ctx, mu_star, f) +
                           sigma * Complex(noise.next_gaussian(), noise.next_gaussian()));

  IdentificationResult r = identify(ctx, set, measurements, quick_lsq(37));
  // the clean model cannot absorb the noise, so the residual floor is about L sigma^2
  REQUIRE(r.residual < 50.0 * 2.0 * sigma * sigma);
  REQUIRE((r.alpha.values - truth).norm() < 0.05);
}

TEST_CASE("identification validates measurement alignment") {
  Rng rng(173);
  ProblemContext ctx = small_context(rng);
  std::vector<HermitianOperator> basis = {testutil::random_hermitian(rng, 3)};
  SelectiveFieldSet set = greedy_fields(ctx, basis, quick_mono(), quick_lsq(41));
  std::vector<Complex> too_many = {Complex(0, 0), Complex(0, 0)};
  REQUIRE_THROWS_AS(identify(ctx, set, too_many, quick_lsq(43)), std::invalid_argument);
}

TEST_CASE("greedy rejects malformed bases") {
  Rng rng(179);
  ProblemContext ctx = small_context(rng);
  REQUIRE_THROWS_AS(greedy_fields(ctx, {}, quick_mono(), quick_lsq(47)), std::invalid_argument);
  REQUIRE_THROWS_AS(greedy_fields(ctx, {testutil::random_hermitian(rng, 2)}, quick_mono(),
                                  quick_lsq(53)),
                    std::invalid_argument);
}
