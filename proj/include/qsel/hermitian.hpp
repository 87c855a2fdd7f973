#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <vector>

#include "qsel/rng.hpp"

// Dense Hermitian operators, spectral decompositions and unit-norm state vectors.
// Everything is small (few levels), so eigendecomposition is the exponential backend.

namespace qsel {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

class HermitianOperator {
 public:
  HermitianOperator() = default;

  // (raw + raw^H)/2; rejects matrices that are not Hermitian up to `tol`.
  explicit HermitianOperator(const Matrix& raw, double tol = 1e-8) {
    if (raw.rows() != raw.cols()) throw std::invalid_argument("hermitian: matrix must be square");
    asymmetry_ = (raw - raw.adjoint()).cwiseAbs().maxCoeff();
    if (!(asymmetry_ <= tol))
      throw std::invalid_argument("hermitian: asymmetry exceeds tolerance");
    m_ = 0.5 * (raw + Matrix(raw.adjoint()));
  }

  static HermitianOperator zero(int n) { return HermitianOperator(Matrix::Zero(n, n)); }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double asymmetry() const { return asymmetry_; }  // of the raw input, before symmetrization

 private:
  Matrix m_;
  double asymmetry_ = 0.0;
};

inline HermitianOperator make_hermitian(const Matrix& raw, double tol = 1e-8) {
  return HermitianOperator(raw, tol);
}

struct SpectralDecomposition {
  RealVector eigenvalues;  // ascending
  Matrix eigenvectors;     // unitary, columns match eigenvalues
};

inline SpectralDecomposition eigendecompose(const HermitianOperator& op) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(op.matrix());
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecompose: solver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

// U diag(exp(-i s lambda_k)) U^H, unitary for real s.
inline Matrix expi_scale(const SpectralDecomposition& dec, double s) {
  const auto n = dec.eigenvalues.size();
  Vector phases(n);
  for (Eigen::Index k = 0; k < n; ++k)
    phases[k] = std::exp(Complex(0.0, -s * dec.eigenvalues[k]));
  return dec.eigenvectors * phases.asDiagonal() * dec.eigenvectors.adjoint();
}

inline Complex inner(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("inner: dimension mismatch");
  return a.dot(b);  // conjugate-linear in the first argument
}

enum class StateRole { physical, tangent, adjoint };

struct StateVector {
  Vector amplitudes;
  StateRole role = StateRole::physical;

  StateVector() = default;
  explicit StateVector(Vector amps, StateRole r = StateRole::physical)
      : amplitudes(std::move(amps)), role(r) {
    if (role == StateRole::physical && std::abs(amplitudes.norm() - 1.0) > 1e-10)
      throw std::invalid_argument("state: physical state must have unit norm");
  }

  int dim() const { return static_cast<int>(amplitudes.size()); }

  static StateVector basis(int n, int k) {
    Vector v = Vector::Zero(n);
    v[k] = 1.0;
    return StateVector(std::move(v));
  }
};

inline HermitianOperator combine(const std::vector<HermitianOperator>& basis,
                                 const RealVector& coeffs) {
  if (basis.empty()) throw std::invalid_argument("combine: empty basis");
  if (coeffs.size() != static_cast<Eigen::Index>(basis.size()))
    throw std::invalid_argument("combine: coefficient count must match basis size");
  Matrix acc = Matrix::Zero(basis[0].dim(), basis[0].dim());
  for (size_t j = 0; j < basis.size(); ++j) acc += coeffs[static_cast<Eigen::Index>(j)] * basis[j].matrix();
  return HermitianOperator(acc);
}

// Coefficients of the best Frobenius approximation of op inside span(basis), via the
// real Gram system; exact when op lies in the span.
inline RealVector project_coefficients(const std::vector<HermitianOperator>& basis,
                                       const HermitianOperator& op) {
  if (basis.empty()) throw std::invalid_argument("project: empty basis");
  const int l = static_cast<int>(basis.size());
  RealMatrix gram(l, l);
  RealVector rhs(l);
  for (int i = 0; i < l; ++i) {
    for (int j = 0; j < l; ++j)
      gram(i, j) = (basis[i].matrix().adjoint() * basis[j].matrix()).trace().real();
    rhs[i] = (basis[i].matrix().adjoint() * op.matrix()).trace().real();
  }
  return gram.ldlt().solve(rhs);
}

// With a diagonal drift and single-level endpoint states, the measured overlap is
// exactly invariant under mu -> D mu D^H for any diagonal unitary D whose phases
// vanish on the two endpoint levels: D commutes with the drift and contributes only
// the endpoint phases to <psi1, U psi0>. Operators therefore identify at best up to
// that phase family; this returns the canonical representative, with the couplings
// between the psi0 level and every free level rotated real nonnegative. Returns mu
// unchanged when the invariance does not apply.
inline HermitianOperator canonical_gauge(const HermitianOperator& h, const StateVector& psi0,
                                         const StateVector& psi1, const HermitianOperator& mu) {
  const int n = mu.dim();
  if (h.dim() != n || psi0.dim() != n || psi1.dim() != n)
    throw std::invalid_argument("gauge: dimension mismatch");
  const double diag_scale = 1.0 + h.matrix().diagonal().cwiseAbs().maxCoeff();
  Matrix offdiag = h.matrix();
  offdiag.diagonal().setZero();
  if (offdiag.cwiseAbs().maxCoeff() > 1e-12 * diag_scale) return mu;
  auto single_level = [](const StateVector& s, int& idx) {
    idx = -1;
    for (int k = 0; k < s.dim(); ++k)
      if (std::abs(s.amplitudes[k]) > 1e-9) {
        if (idx >= 0) return false;
        idx = k;
      }
    return idx >= 0;
  };
  int lo = -1, hi = -1;
  if (!single_level(psi0, lo) || !single_level(psi1, hi)) return mu;

  Vector d = Vector::Ones(n);
  for (int g = 0; g < n; ++g) {
    if (g == lo || g == hi) continue;
    const Complex v = mu.matrix()(lo, g);
    if (std::abs(v) > 1e-12) d[g] = v / std::abs(v);
  }
  return HermitianOperator(d.asDiagonal() * mu.matrix() * d.conjugate().asDiagonal());
}

// L random Hermitians with i.i.d. standard normal entries (then symmetrized),
// orthonormalized in the Frobenius inner product. The identity Gram matrix keeps the
// coefficient vector of any spanned operator as small as the operator itself, which
// every least-squares solve over the coefficients downstream depends on.
inline std::vector<HermitianOperator> random_hermitian_basis(int n, int l, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("basis: dimension must be positive");
  if (l < 1 || l > n * n) throw std::invalid_argument("basis: need 1 <= L <= N^2");
  Rng rng(seed);
  std::vector<HermitianOperator> basis;
  basis.reserve(l);
  for (int b = 0; b < l; ++b) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Matrix raw(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) raw(i, j) = Complex(rng.next_gaussian(), rng.next_gaussian());
      Matrix v = 0.5 * (raw + Matrix(raw.adjoint()));
      for (const auto& prev : basis)
        v -= (prev.matrix() * v).trace().real() * prev.matrix();
      const double norm = std::sqrt((v * v).trace().real());
      if (norm > 1e-6) {
        basis.emplace_back(Matrix(v / norm));
        break;
      }
      if (attempt == 999) throw std::runtime_error("basis: failed to draw an independent element");
    }
  }
  return basis;
}

}  // namespace qsel
