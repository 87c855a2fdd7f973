#include <catch2/catch_amalgamated.hpp>

#include "qsel/propagator.hpp"
#include "test_util.hpp"

using namespace qsel;

namespace {

// smooth test field sampled at interval midpoints, which keeps the splitting second order
ControlField midpoint_sampled(const TimeGrid& grid, double (*f)(double)) {
  RealVector s(grid.M);
  for (int j = 0; j < grid.M; ++j) s[j] = f((j + 0.5) * grid.dt());
  return ControlField(grid, std::move(s));
}

double smooth_wave(double t) { return 0.4 * std::sin(0.9 * t) + 0.2 * std::cos(0.31 * t); }

}  // namespace

TEST_CASE("zero field reproduces free evolution exactly") {
  Rng rng(101);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  StateVector psi0 = testutil::random_state(rng, 3);
  TimeGrid grid(12.0, 300);
  Trajectory t = propagate(h, mu, ControlField::zero(grid), psi0);
  Vector expected = expi_scale(eigendecompose(h), grid.T) * psi0.amplitudes;
  REQUIRE((t.final_state() - expected).norm() < 1e-10);
  REQUIRE(t.states.size() == 301);
  REQUIRE((t.initial() - psi0.amplitudes).norm() == 0.0);
}

TEST_CASE("commuting operators make the splitting exact") {
  Matrix hd = Matrix::Zero(3, 3), md = Matrix::Zero(3, 3);
  hd(0, 0) = 0.3; hd(1, 1) = -0.1; hd(2, 2) = 0.7;
  md(0, 0) = 1.1; md(1, 1) = 0.4; md(2, 2) = -0.6;
  HermitianOperator h(hd), mu(md);
  Rng rng(5);
  StateVector psi0 = testutil::random_state(rng, 3);
  TimeGrid grid(7.0, 140);
  const double eps = 0.8;
  Trajectory t = propagate(h, mu, ControlField(grid, RealVector::Constant(140, eps)), psi0);
  HermitianOperator total(hd + eps * md);
  Vector expected = expi_scale(eigendecompose(total), grid.T) * psi0.amplitudes;
  REQUIRE((t.final_state() - expected).norm() < 1e-10);
}

TEST_CASE("norms are conserved to 1e-10 across random propagations") {
  Rng rng(211);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 2 + static_cast<int>(rng.next_u64() % 4);
    HermitianOperator h = testutil::random_hermitian(rng, n);
    HermitianOperator mu = testutil::random_hermitian(rng, n);
    StateVector psi0 = testutil::random_state(rng, n);
    TimeGrid grid(5.0 + 10.0 * rng.next_double(), 200 + static_cast<int>(rng.next_u64() % 200));
    ControlField f = testutil::random_field(rng, grid, 1.5);
    Trajectory t = propagate(h, mu, f, psi0);
    REQUIRE(t.max_norm_deviation < 1e-10);
  }
}

TEST_CASE("splitting error decays at second order in the step size") {
  Rng rng(307);
  HermitianOperator h = testutil::random_hermitian(rng, 3, 0.6);
  HermitianOperator mu = testutil::random_hermitian(rng, 3, 0.6);
  StateVector psi0 = testutil::random_state(rng, 3);
  const double horizon = 20.0;
  const int base = 40;

  Vector reference = propagate(h, mu, midpoint_sampled(TimeGrid(horizon, base * 64), smooth_wave),
                               psi0).final_state();
  std::vector<double> log_dt, log_err;
  for (int scale : {1, 2, 4, 8}) {
    TimeGrid grid(horizon, base * scale);
    Vector fin = propagate(h, mu, midpoint_sampled(grid, smooth_wave), psi0).final_state();
    log_dt.push_back(std::log(grid.dt()));
    log_err.push_back(std::log((fin - reference).norm()));
  }
  // least-squares slope of log err vs log dt
  double mx = 0, my = 0;
  for (size_t i = 0; i < log_dt.size(); ++i) { mx += log_dt[i]; my += log_err[i]; }
  mx /= log_dt.size(); my /= log_err.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < log_dt.size(); ++i) {
    num += (log_dt[i] - mx) * (log_err[i] - my);
    den += (log_dt[i] - mx) * (log_dt[i] - mx);
  }
  const double slope = num / den;
  REQUIRE(slope > 1.7);
  REQUIRE(slope < 2.3);
}

TEST_CASE("backward propagation inverts the forward map") {
  Rng rng(401);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  StateVector psi0 = testutil::random_state(rng, 3);
  TimeGrid grid(9.0, 180);
  ControlField f = testutil::random_field(rng, grid, 1.0);
  Trajectory fwd = propagate(h, mu, f, psi0);
  Trajectory bwd = propagate_adjoint(h, mu, f, fwd.final_state());
  REQUIRE(bwd.role == StateRole::adjoint);
  for (int j = 0; j <= grid.M; j += 30)
    REQUIRE((bwd.states[j] - fwd.states[j]).norm() < 1e-10);
}

TEST_CASE("backward propagation under zero field applies the reversed drift") {
  Rng rng(403);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  Vector terminal(3);
  terminal << Complex(0.2, -0.4), Complex(1.0, 0.3), Complex(-0.5, 0.0);
  TimeGrid grid(6.0, 120);
  Trajectory bwd = propagate_adjoint(h, mu, ControlField::zero(grid), terminal);
  Vector expected = expi_scale(eigendecompose(h), -grid.T) * terminal;
  REQUIRE((bwd.states[0] - expected).norm() < 1e-10);
  REQUIRE((bwd.states[grid.M] - terminal).norm() == 0.0);
}

TEST_CASE("costate inner products are invariant along the pair") {
  Rng rng(409);
  HermitianOperator h = testutil::random_hermitian(rng, 4);
  HermitianOperator mu = testutil::random_hermitian(rng, 4);
  StateVector psi0 = testutil::random_state(rng, 4);
  TimeGrid grid(8.0, 160);
  ControlField f = testutil::random_field(rng, grid, 0.8);
  Trajectory fwd = propagate(h, mu, f, psi0);
  Vector terminal(4);
  for (int i = 0; i < 4; ++i) terminal[i] = Complex(rng.next_gaussian(), rng.next_gaussian());
  Trajectory bwd = propagate_adjoint(h, mu, f, terminal);
  Complex c0 = inner(bwd.states[0], fwd.states[0]);
  for (int j = 1; j <= grid.M; j += 20)
    REQUIRE(std::abs(inner(bwd.states[j], fwd.states[j]) - c0) < 1e-11);
}

TEST_CASE("tangent along a zero direction vanishes") {
  Rng rng(501);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  StateVector psi0 = testutil::random_state(rng, 3);
  TimeGrid grid(5.0, 100);
  ControlField f = testutil::random_field(rng, grid, 1.0);
  Trajectory base = propagate(h, mu, f, psi0);
  StateVector d = propagate_tangent(h, mu, HermitianOperator::zero(3), f, base);
  REQUIRE(d.amplitudes.norm() == 0.0);
  REQUIRE(d.role == StateRole::tangent);
}

TEST_CASE("tangent is linear in the direction") {
  Rng rng(503);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  HermitianOperator d1 = testutil::random_hermitian(rng, 3);
  HermitianOperator d2 = testutil::random_hermitian(rng, 3);
  StateVector psi0 = testutil::random_state(rng, 3);
  TimeGrid grid(5.0, 100);
  ControlField f = testutil::random_field(rng, grid, 1.0);
  Trajectory base = propagate(h, mu, f, psi0);
  Vector t1 = propagate_tangent(h, mu, d1, f, base).amplitudes;
  Vector t2 = propagate_tangent(h, mu, d2, f, base).amplitudes;
  HermitianOperator mix(2.0 * d1.matrix() - 0.5 * d2.matrix());
  Vector tmix = propagate_tangent(h, mu, mix, f, base).amplitudes;
  REQUIRE((tmix - (2.0 * t1 - 0.5 * t2)).norm() < 1e-12);
}

TEST_CASE("tangent matches central differences of the discrete map") {
  Rng rng(509);
  for (int trial = 0; trial < 5; ++trial) {
    HermitianOperator h = testutil::random_hermitian(rng, 3);
    HermitianOperator mu = testutil::random_hermitian(rng, 3);
    HermitianOperator dir = testutil::random_hermitian(rng, 3);
    StateVector psi0 = testutil::random_state(rng, 3);
    TimeGrid grid(6.0, 120);
    ControlField f = testutil::random_field(rng, grid, 1.0);
    Trajectory base = propagate(h, mu, f, psi0);
    Vector tangent = propagate_tangent(h, mu, dir, f, base).amplitudes;

    const double step = 1e-5;
    Vector hi = propagate(h, HermitianOperator(mu.matrix() + step * dir.matrix()), f, psi0)
                    .final_state();
    Vector lo = propagate(h, HermitianOperator(mu.matrix() - step * dir.matrix()), f, psi0)
                    .final_state();
    Vector fd = (hi - lo) / (2.0 * step);
    REQUIRE((tangent - fd).norm() / fd.norm() < 1e-6);
  }
}

TEST_CASE("batched tangents agree with one-at-a-time tangents") {
  Rng rng(521);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  std::vector<HermitianOperator> dirs = {testutil::random_hermitian(rng, 3),
                                         testutil::random_hermitian(rng, 3),
                                         testutil::random_hermitian(rng, 3)};
  StateVector psi0 = testutil::random_state(rng, 3);
  TimeGrid grid(4.0, 90);
  ControlField f = testutil::random_field(rng, grid, 0.9);
  Trajectory base = propagate(h, mu, f, psi0);
  auto batch = propagate_tangent_multi(h, mu, dirs, f, base);
  for (size_t i = 0; i < dirs.size(); ++i) {
    Vector single = propagate_tangent(h, mu, dirs[i], f, base).amplitudes;
    REQUIRE((batch[i] - single).norm() < 1e-13);
  }
}

TEST_CASE("divided-difference operator is symmetric in its control arguments") {
  Rng rng(601);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  Matrix a = mu_delta_t(h, mu, 0.7, -0.2, 0.05);
  Matrix b = mu_delta_t(h, mu, -0.2, 0.7, 0.05);
  REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("divided-difference operator is continuous through coincident controls") {
  Rng rng(607);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu = testutil::random_hermitian(rng, 3);
  Matrix limit = mu_delta_t(h, mu, 0.4, 0.4, 0.1);
  Matrix near = mu_delta_t(h, mu, 0.4 + 1e-12, 0.4, 0.1);
  REQUIRE((limit - near).cwiseAbs().maxCoeff() < 1e-10);

  // coincident controls yield the sandwiched derivative of the control exponential
  Matrix half = expi_scale(eigendecompose(h), 0.05);
  Matrix inner_deriv = mu.matrix() * expi_scale(eigendecompose(mu), 0.4 * 0.1);
  Matrix expected = half * inner_deriv * half;
  REQUIRE((limit - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("propagation validates its inputs") {
  Rng rng(701);
  HermitianOperator h = testutil::random_hermitian(rng, 3);
  HermitianOperator mu2 = testutil::random_hermitian(rng, 2);
  StateVector psi0 = testutil::random_state(rng, 3);
  TimeGrid grid(1.0, 10);
  REQUIRE_THROWS_AS(propagate(h, mu2, ControlField::zero(grid), psi0), std::invalid_argument);
  StateVector wrong_dim = testutil::random_state(rng, 2);
  HermitianOperator mu3 = testutil::random_hermitian(rng, 3);
  REQUIRE_THROWS_AS(propagate(h, mu3, ControlField::zero(grid), wrong_dim), std::invalid_argument);
}
