#pragma once

#include <stdexcept>
#include <vector>

#include "qsel/field.hpp"
#include "qsel/hermitian.hpp"

// Strang-splitting propagation for i psi' = [H + eps(t) mu] psi, plus the exact
// tangent (derivative of the discrete map) and the adjoint of each discrete step.
// One step reads
//   psi_{j+1} = e^{-iH dt/2} e^{-i eps_j mu dt} e^{-iH dt/2} psi_j
// and is evaluated as two matvecs: with A = e^{-iH dt/2}, mu = U diag(lambda) U^H,
//   psi_{j+1} = Q diag(e^{-i eps_j lambda dt}) P psi_j,  P = U^H A,  Q = A U.

namespace qsel {

namespace detail {

// sinh(z)/z, stable near 0
inline Complex sinch(Complex z) {
  if (std::abs(z) < 1e-4) {
    Complex z2 = z * z;
    return 1.0 + z2 / 6.0 + z2 * z2 / 120.0;
  }
  return std::sinh(z) / z;
}

// sin(x)/x, stable near 0; equals sinch(ix) which is real
inline double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

// (e^x - e^y)/(x - y), symmetric and exact in the confluent limit
inline Complex exp_divided_difference(Complex x, Complex y) {
  return std::exp(0.5 * (x + y)) * sinch(0.5 * (x - y));
}

}  // namespace detail

struct Trajectory {
  TimeGrid grid;
  std::vector<Vector> states;  // M+1 entries, states[j] at t = j dt
  StateRole role = StateRole::physical;
  double max_norm_deviation = 0.0;  // max_j | ||psi_j|| - 1 |, physical runs only

  const Vector& initial() const { return states.front(); }
  const Vector& final_state() const { return states.back(); }
};

// Precomputed factors of one Strang step for a fixed (H, mu, dt).
class StrangStepper {
 public:
  StrangStepper(const HermitianOperator& h, const HermitianOperator& mu, double dt) : dt_(dt) {
    if (h.dim() != mu.dim()) throw std::invalid_argument("stepper: H and mu dimensions differ");
    SpectralDecomposition mud = eigendecompose(mu);
    lambda_ = mud.eigenvalues;
    Matrix a = expi_scale(eigendecompose(h), 0.5 * dt);
    p_ = mud.eigenvectors.adjoint() * a;
    q_ = a * mud.eigenvectors;
    pa_ = p_.adjoint();
    qa_ = q_.adjoint();
    scratch_.resize(h.dim());
  }

  int dim() const { return static_cast<int>(p_.rows()); }
  double dt() const { return dt_; }
  const RealVector& lambda() const { return lambda_; }
  const Matrix& p() const { return p_; }
  const Matrix& q() const { return q_; }
  const Matrix& pa() const { return pa_; }
  const Matrix& qa() const { return qa_; }

  Vector control_phases(double eps) const {
    Vector ph(lambda_.size());
    for (Eigen::Index k = 0; k < lambda_.size(); ++k)
      ph[k] = std::exp(Complex(0.0, -eps * lambda_[k] * dt_));
    return ph;
  }

  void step_forward(Vector& psi, double eps) const {
    scratch_.noalias() = p_ * psi;
    rotate(scratch_, -eps * dt_);
    psi.noalias() = q_ * scratch_;
  }

  // adjoint of the forward step: chi_j = (A B A)^H chi_{j+1}
  void step_backward(Vector& chi, double eps) const {
    scratch_.noalias() = qa_ * chi;
    rotate(scratch_, eps * dt_);
    chi.noalias() = pa_ * scratch_;
  }

  // half-step views used by the monotonic sweep, in the dipole eigenbasis
  Vector to_mid_forward(const Vector& psi) const { return p_ * psi; }   // U^H A psi_j
  Vector to_mid_backward(const Vector& chi) const { return qa_ * chi; }  // U^H A^H chi_{j+1}
  Vector advance_from_mid(const Vector& mid, double eps) const {
    scratch_ = mid;
    rotate(scratch_, -eps * dt_);
    return q_ * scratch_;
  }

 private:
  // v[k] *= e^{i s lambda_k}, without heap traffic
  void rotate(Vector& v, double s) const {
    for (Eigen::Index k = 0; k < lambda_.size(); ++k) {
      const double a = s * lambda_[k];
      v[k] *= Complex(std::cos(a), std::sin(a));
    }
  }

  double dt_;
  RealVector lambda_;
  Matrix p_, q_, pa_, qa_;
  mutable Vector scratch_;
};

inline Trajectory propagate(const HermitianOperator& h, const HermitianOperator& mu,
                            const ControlField& field, const StateVector& psi0) {
  if (psi0.dim() != h.dim()) throw std::invalid_argument("propagate: state dimension mismatch");
  if (psi0.role != StateRole::physical)
    throw std::invalid_argument("propagate: initial state must be physical");
  StrangStepper stepper(h, mu, field.grid.dt());
  Trajectory out;
  out.grid = field.grid;
  out.states.resize(field.grid.M + 1);
  out.states[0] = psi0.amplitudes;
  Vector psi = psi0.amplitudes;
  double worst = std::abs(psi.norm() - 1.0);
  for (int j = 0; j < field.grid.M; ++j) {
    stepper.step_forward(psi, field.samples[j]);
    out.states[j + 1] = psi;
    worst = std::max(worst, std::abs(psi.norm() - 1.0));
  }
  out.max_norm_deviation = worst;
  if (worst > 1e-8) throw std::runtime_error("propagate: norm drift beyond 1e-8");
  return out;
}

// Backward propagation of a terminal costate under the same dynamics; states[j] is
// chi_j, so states[M] equals the given terminal vector. Unitary: no renormalization.
inline Trajectory propagate_adjoint(const HermitianOperator& h, const HermitianOperator& mu,
                                    const ControlField& field, const Vector& terminal) {
  if (terminal.size() != h.dim()) throw std::invalid_argument("adjoint: dimension mismatch");
  StrangStepper stepper(h, mu, field.grid.dt());
  Trajectory out;
  out.grid = field.grid;
  out.role = StateRole::adjoint;
  out.states.resize(field.grid.M + 1);
  out.states[field.grid.M] = terminal;
  Vector chi = terminal;
  for (int j = field.grid.M - 1; j >= 0; --j) {
    stepper.step_backward(chi, field.samples[j]);
    out.states[j] = chi;
  }
  return out;
}

// Directional derivative of the final state of the discrete map with respect to the
// dipole operator, along each direction in `dirs`; base must hold the trajectory of
// (h, mu, field). Differentiating the control exponential uses the eigenbasis rule
// (dB)_{pq} = E_{pq} (e^{x_p} - e^{x_q})/(x_p - x_q) with x_k = -i eps lambda_k dt.
inline std::vector<Vector> propagate_tangent_multi(const HermitianOperator& h,
                                                   const HermitianOperator& mu,
                                                   const std::vector<HermitianOperator>& dirs,
                                                   const ControlField& field,
                                                   const Trajectory& base) {
  const int m = field.grid.M;
  const int n = h.dim();
  if (base.states.size() != static_cast<size_t>(m) + 1 || base.grid != field.grid)
    throw std::invalid_argument("tangent: base trajectory does not match the field grid");
  StrangStepper stepper(h, mu, field.grid.dt());
  SpectralDecomposition mud = eigendecompose(mu);
  const double dt = field.grid.dt();

  std::vector<Matrix> w;  // directions in the dipole eigenbasis
  w.reserve(dirs.size());
  for (const auto& d : dirs) {
    if (d.dim() != n) throw std::invalid_argument("tangent: direction dimension mismatch");
    w.push_back(Matrix(mud.eigenvectors.adjoint() * d.matrix() * mud.eigenvectors));
  }

  std::vector<Vector> delta(dirs.size(), Vector::Zero(n));
  Matrix dd(n, n);
  Vector phases(n), base_mid(n), mid(n), tmp(n);
  for (int j = 0; j < m; ++j) {
    const double e = field.samples[j];
    for (int k = 0; k < n; ++k) {
      const double a = -e * mud.eigenvalues[k] * dt;
      phases[k] = Complex(std::cos(a), std::sin(a));
    }
    base_mid.noalias() = stepper.p() * base.states[j];
    if (e != 0.0) {
      // symmetric, and purely imaginary arguments make the sinch factor real
      for (int r = 0; r < n; ++r)
        for (int c = r; c < n; ++c) {
          const double x = -e * mud.eigenvalues[r] * dt;
          const double y = -e * mud.eigenvalues[c] * dt;
          const double hs = 0.5 * (x + y);
          const Complex v = Complex(std::cos(hs), std::sin(hs)) * detail::sinc(0.5 * (x - y));
          dd(r, c) = v;
          dd(c, r) = v;
        }
    }
    for (size_t i = 0; i < dirs.size(); ++i) {
      tmp.noalias() = stepper.p() * delta[i];
      mid.array() = phases.array() * tmp.array();
      if (e != 0.0) {
        const Complex scale(0.0, -e * dt);
        for (int r = 0; r < n; ++r) {
          Complex s = 0.0;
          for (int c = 0; c < n; ++c) s += w[i](r, c) * dd(r, c) * base_mid[c];
          mid[r] += scale * s;
        }
      }
      delta[i].noalias() = stepper.q() * mid;
    }
  }
  return delta;
}

inline StateVector propagate_tangent(const HermitianOperator& h, const HermitianOperator& mu,
                                     const HermitianOperator& dmu, const ControlField& field,
                                     const Trajectory& base) {
  auto finals = propagate_tangent_multi(h, mu, {dmu}, field, base);
  return StateVector(std::move(finals[0]), StateRole::tangent);
}

// Divided-difference operator of one Strang step between two control values,
//   e^{-iH dt/2} [(e^{-i e1 mu dt} - e^{-i e0 mu dt}) / (-i dt (e1 - e0))] e^{-iH dt/2},
// evaluated per dipole eigenvalue as lambda e^{-i(e1+e0) lambda dt/2} sinch((e0-e1) i lambda dt/2),
// which is swap-symmetric and continuous through the confluent limit e1 -> e0, where it
// becomes e^{-iH dt/2} (mu e^{-i e0 mu dt}) e^{-iH dt/2}. Contracted against the step's
// right-endpoint costate and left-endpoint trial state, it turns the telescoped
// difference of two propagations into an exact per-step sum; that identity is what the
// monotonic field updates rely on, so this exact form (not the naive ratio, which
// cancels catastrophically for nearby control values) matters.
inline Matrix mu_delta_t(const HermitianOperator& h, const HermitianOperator& mu, double eps_new,
                         double eps_old, double dt) {
  if (h.dim() != mu.dim()) throw std::invalid_argument("mu_delta_t: dimension mismatch");
  SpectralDecomposition mud = eigendecompose(mu);
  SpectralDecomposition hd = eigendecompose(h);
  Matrix a = expi_scale(hd, 0.5 * dt);
  const auto n = mud.eigenvalues.size();
  Vector g(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lam = mud.eigenvalues[k];
    const Complex center = std::exp(Complex(0.0, -0.5 * (eps_new + eps_old) * lam * dt));
    g[k] = lam * center * detail::sinch(Complex(0.0, -0.5 * (eps_new - eps_old) * lam * dt));
  }
  Matrix core = mud.eigenvectors * g.asDiagonal() * mud.eigenvectors.adjoint();
  return a * core * a;
}

}  // namespace qsel
