#pragma once

#include <vector>

#include "qsel/propagator.hpp"

// Measurement functional, discrimination objective, and the operator-fitting
// least-squares cost with its exact gradient.

namespace qsel {

struct ProblemContext {
  HermitianOperator H;
  StateVector psi0;
  StateVector psi1;
  TimeGrid grid;
  double beta = 0.0;  // field penalty weight

  ProblemContext() = default;
  ProblemContext(HermitianOperator h, StateVector s0, StateVector s1, TimeGrid g, double b)
      : H(std::move(h)), psi0(std::move(s0)), psi1(std::move(s1)), grid(g), beta(b) {
    if (psi0.dim() != H.dim() || psi1.dim() != H.dim())
      throw std::invalid_argument("context: state dimensions must match H");
    if (!(beta >= 0.0) || !std::isfinite(beta))
      throw std::invalid_argument("context: beta must be finite and non-negative");
  }
};

struct DipoleCoefficients {
  RealVector values;

  DipoleCoefficients() = default;
  explicit DipoleCoefficients(RealVector v) : values(std::move(v)) {
    if (!values.allFinite()) throw std::invalid_argument("coefficients: must be finite");
  }
  int size() const { return static_cast<int>(values.size()); }
};

// phi(mu, eps) = <psi1, psi(T)>; modulus bounded by 1
inline Complex measure_phi(const ProblemContext& ctx, const HermitianOperator& mu,
                           const ControlField& field) {
  Trajectory t = propagate(ctx.H, mu, field, ctx.psi0);
  return inner(ctx.psi1.amplitudes, t.final_state());
}

// Discrimination objective between two candidate dipoles driven by the same field:
//   J(eps) = |<psi1, psiA(T) - psiB(T)>|^2 - beta dt sum_j eps_j^2
inline double selectivity_J(const ProblemContext& ctx, const HermitianOperator& mu_a,
                            const HermitianOperator& mu_b, const ControlField& field) {
  const Complex gap = measure_phi(ctx, mu_a, field) - measure_phi(ctx, mu_b, field);
  return std::norm(gap) - ctx.beta * field.grid.dt() * field.samples.squaredNorm();
}

namespace detail {

// residuals phi(mu_k, eps_m) - phi(sum_j alpha_j mu_j, eps_m) for m = 1..k-1,
// with the target overlaps precomputed by the caller
inline std::vector<Complex> fitting_residuals(const ProblemContext& ctx,
                                              const std::vector<HermitianOperator>& basis,
                                              int k, const RealVector& alpha,
                                              const std::vector<ControlField>& fields,
                                              const std::vector<Complex>& target_phi) {
  HermitianOperator mix = combine({basis.begin(), basis.begin() + (k - 1)}, alpha);
  std::vector<Complex> r(fields.size());
  for (size_t m = 0; m < fields.size(); ++m)
    r[m] = target_phi[m] - measure_phi(ctx, mix, fields[m]);
  return r;
}

inline void check_fitting_args(const std::vector<HermitianOperator>& basis, int k,
                               const RealVector& alpha, const std::vector<ControlField>& fields) {
  if (k < 2 || k > static_cast<int>(basis.size()))
    throw std::invalid_argument("fitting: need 2 <= k <= basis size");
  if (alpha.size() != k - 1) throw std::invalid_argument("fitting: alpha must have k-1 entries");
  if (fields.size() != static_cast<size_t>(k - 1))
    throw std::invalid_argument("fitting: need k-1 fields");
}

inline std::vector<Complex> fitting_targets(const ProblemContext& ctx,
                                            const std::vector<HermitianOperator>& basis, int k,
                                            const std::vector<ControlField>& fields) {
  std::vector<Complex> t(fields.size());
  for (size_t m = 0; m < fields.size(); ++m) t[m] = measure_phi(ctx, basis[k - 1], fields[m]);
  return t;
}

inline double fitting_cost_with_targets(const ProblemContext& ctx,
                                        const std::vector<HermitianOperator>& basis, int k,
                                        const RealVector& alpha,
                                        const std::vector<ControlField>& fields,
                                        const std::vector<Complex>& targets) {
  double acc = 0.0;
  for (Complex r : fitting_residuals(ctx, basis, k, alpha, fields, targets)) acc += std::norm(r);
  return acc;
}

inline RealVector fitting_gradient_with_targets(const ProblemContext& ctx,
                                                const std::vector<HermitianOperator>& basis, int k,
                                                const RealVector& alpha,
                                                const std::vector<ControlField>& fields,
                                                const std::vector<Complex>& targets) {
  std::vector<HermitianOperator> span(basis.begin(), basis.begin() + (k - 1));
  HermitianOperator mix = combine(span, alpha);
  RealVector grad = RealVector::Zero(k - 1);
  for (size_t m = 0; m < fields.size(); ++m) {
    Trajectory base = propagate(ctx.H, mix, fields[m], ctx.psi0);
    const Complex r = targets[m] - inner(ctx.psi1.amplitudes, base.final_state());
    auto tangents = propagate_tangent_multi(ctx.H, mix, span, fields[m], base);
    for (int j = 0; j < k - 1; ++j)
      grad[j] -= 2.0 * std::real(std::conj(r) * inner(ctx.psi1.amplitudes, tangents[j]));
  }
  return grad;
}

}  // namespace detail

// K^k(alpha) = sum_{m<k} |phi(mu_k, eps_m) - phi(sum_j alpha_j mu_j, eps_m)|^2
inline double fitting_cost(const ProblemContext& ctx, const std::vector<HermitianOperator>& basis,
                           int k, const RealVector& alpha,
                           const std::vector<ControlField>& fields) {
  detail::check_fitting_args(basis, k, alpha, fields);
  auto targets = detail::fitting_targets(ctx, basis, k, fields);
  return detail::fitting_cost_with_targets(ctx, basis, k, alpha, fields, targets);
}

// Exact gradient of fitting_cost: with residuals r_m = phi_k - phi_alpha and
// final-state tangents d_j psi along each basis direction,
//   dK/dalpha_j = -sum_m 2 Re( conj(r_m) <psi1, d_j psi(T)> ).
inline RealVector fitting_gradient(const ProblemContext& ctx,
                                   const std::vector<HermitianOperator>& basis, int k,
                                   const RealVector& alpha,
                                   const std::vector<ControlField>& fields) {
  detail::check_fitting_args(basis, k, alpha, fields);
  auto targets = detail::fitting_targets(ctx, basis, k, fields);
  return detail::fitting_gradient_with_targets(ctx, basis, k, alpha, fields, targets);
}

}  // namespace qsel
