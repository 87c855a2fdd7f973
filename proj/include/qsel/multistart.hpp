#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>

#include "qsel/hermitian.hpp"
#include "qsel/rng.hpp"
#include "qsel/trace.hpp"

// Multistart BFGS for small nonconvex least-squares costs. Each restart is a
// quasi-Newton descent with a backtracking Armijo line search from a seeded
// Gaussian start; the best minimizer over all restarts wins.

namespace qsel {

struct MultistartSettings {
  int restarts = 10;
  double init_scale = 1.0;
  double convergence_tol = 1e-10;  // on the gradient norm
  int max_evals = 2000;            // cost + gradient evaluations per restart
  double target_cost = 0.0;  // skip remaining restarts once a restart reaches this (0 disables)
  std::uint64_t seed = 0;
};

struct MultistartResult {
  RealVector x;
  double cost = 0.0;
  OptimizerTrace trace;  // history of the winning restart
};

inline MultistartResult multistart_lsq(const std::function<double(const RealVector&)>& cost,
                                       const std::function<RealVector(const RealVector&)>& gradient,
                                       int dim, const MultistartSettings& s) {
  if (dim < 1) throw std::invalid_argument("multistart: dimension must be positive");
  if (s.restarts < 1) throw std::invalid_argument("multistart: need at least one restart");
  Rng rng(s.seed);
  MultistartResult best;
  best.cost = std::numeric_limits<double>::infinity();

  for (int r = 0; r < s.restarts; ++r) {
    RealVector x(dim);
    for (int i = 0; i < dim; ++i) x[i] = s.init_scale * rng.next_gaussian();

    OptimizerTrace trace;
    int evals = 0;
    double f = cost(x);
    ++evals;
    trace.objective_history.push_back(f);
    RealVector g = gradient(x);
    ++evals;
    RealMatrix hinv = RealMatrix::Identity(dim, dim);
    bool scaled = false;

    while (evals < s.max_evals) {
      if (g.norm() <= s.convergence_tol) {
        trace.converged = true;
        break;
      }
      RealVector d = -(hinv * g);
      double slope = g.dot(d);
      if (!(slope < 0.0)) {  // curvature information went bad; restart from steepest descent
        hinv.setIdentity();
        scaled = false;
        d = -g;
        slope = g.dot(d);
        if (!(slope < 0.0)) break;  // gradient numerically zero
      }
      double t = 1.0;
      double f_new = f;
      bool accepted = false;
      while (t > 1e-18 && evals < s.max_evals) {
        f_new = cost(x + t * d);
        ++evals;
        if (f_new <= f + 1e-4 * t * slope) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) break;

      RealVector x_new = x + t * d;
      RealVector g_new = gradient(x_new);
      ++evals;
      RealVector step = t * d;
      RealVector dg = g_new - g;
      const double sy = step.dot(dg);
      if (sy > 1e-12 * step.norm() * dg.norm()) {
        if (!scaled) {  // standard initial scaling before the first update
          hinv = RealMatrix::Identity(dim, dim) * (sy / dg.squaredNorm());
          scaled = true;
        }
        const double rho = 1.0 / sy;
        RealMatrix left = RealMatrix::Identity(dim, dim) - rho * step * dg.transpose();
        hinv = left * hinv * left.transpose() + rho * step * step.transpose();
      }
      x = std::move(x_new);
      g = std::move(g_new);
      f = f_new;
      ++trace.iterations;
      trace.objective_history.push_back(f);
    }

    if (f < best.cost) {
      best.cost = f;
      best.x = x;
      best.trace = std::move(trace);
    }
    // a restart that already matches the data to the target cannot be beaten in any
    // way that matters, so the remaining restarts are skipped
    if (s.target_cost > 0.0 && best.cost <= s.target_cost) break;
  }
  return best;
}

struct LevenbergSettings {
  int max_iters = 80;
  double step_tol = 1e-13;     // stop when the accepted step is this small
  double damping_init = 1e-3;  // multiplies the diagonal of the Gauss-Newton matrix
};

// Damped Gauss-Newton descent on C(x) = sum_i |r_i(x)|^2 for real x and complex
// residuals. eval(x, r, jac) must fill r (m entries) and jac (m x n, d r_i / d x_j);
// gradient and model Hessian follow as 2 Re(J^H r) and 2 Re(J^H J). Local by design:
// callers supply the starting point.
inline MultistartResult levenberg_polish(
    const std::function<void(const RealVector&, Eigen::VectorXcd&, Eigen::MatrixXcd&)>& eval,
    RealVector x, const LevenbergSettings& s = {}) {
  const int n = static_cast<int>(x.size());
  if (n < 1) throw std::invalid_argument("levenberg: dimension must be positive");
  Eigen::VectorXcd r;
  Eigen::MatrixXcd jac;
  eval(x, r, jac);
  double cost = r.squaredNorm();

  MultistartResult out;
  out.trace.objective_history.push_back(cost);
  double damping = s.damping_init;
  for (int iter = 1; iter <= s.max_iters; ++iter) {
    const RealMatrix gn = (jac.adjoint() * jac).real();
    const RealVector grad = (jac.adjoint() * r).real();
    bool accepted = false;
    RealVector step(n);
    while (damping < 1e14) {
      RealMatrix lhs = gn;
      for (int i = 0; i < n; ++i) lhs(i, i) += damping * std::max(gn(i, i), 1e-30);
      step = lhs.ldlt().solve(-grad);
      Eigen::VectorXcd r_new;
      Eigen::MatrixXcd jac_new;
      eval(x + step, r_new, jac_new);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new <= cost) {
        x += step;
        r.swap(r_new);
        jac.swap(jac_new);
        cost = cost_new;
        damping = std::max(damping * 0.25, 1e-12);
        accepted = true;
        break;
      }
      damping *= 4.0;
    }
    if (!accepted) break;
    out.trace.objective_history.push_back(cost);
    out.trace.iterations = iter;
    if (step.norm() <= s.step_tol * std::max(1.0, x.norm())) {
      out.trace.converged = true;
      break;
    }
  }
  out.x = std::move(x);
  out.cost = cost;
  return out;
}

}  // namespace qsel
