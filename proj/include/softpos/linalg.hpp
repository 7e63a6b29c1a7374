#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

namespace softpos {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

namespace linalg {

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline ComplexVector eigenvalues(const Matrix& a) {
  if (a.rows() == 0) return ComplexVector(0);
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues();
}

inline double spectral_radius(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  return eigenvalues(a).cwiseAbs().maxCoeff();
}

/// Smallest eigenvalue of the symmetric part of `m`.
inline double min_symmetric_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// PSD to a tolerance relative to the matrix scale.
inline bool is_psd(const Matrix& m, double rel_tol = 1e-9) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return min_symmetric_eigenvalue(m) >= -rel_tol * scale;
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

namespace detail {

// Numerical rank of a complex matrix from its singular values.
inline Eigen::Index complex_rank(const Eigen::MatrixXcd& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const auto& s = svd.singularValues();
  const double tol = rel_tol * std::max<double>(1.0, s(0));
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol) ++r;
  }
  return r;
}

}  // namespace detail

/// PBH test: rank [λI − A, B] = n for every eigenvalue λ of A with |λ| ≥ 1.
inline bool is_stabilizable(const Matrix& a, const Matrix& b, double rel_tol = 1e-10) {
  const Eigen::Index n = a.rows();
  const ComplexVector eig = eigenvalues(a);
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (std::abs(eig(i)) < 1.0) continue;
    Eigen::MatrixXcd pbh(n, n + b.cols());
    pbh.leftCols(n) = eig(i) * Eigen::MatrixXcd::Identity(n, n) - a.cast<std::complex<double>>();
    pbh.rightCols(b.cols()) = b.cast<std::complex<double>>();
    if (detail::complex_rank(pbh, rel_tol) < n) return false;
  }
  return true;
}

/// Dual of is_stabilizable: (A, C) detectable iff (Aᵀ, Cᵀ) stabilizable.
inline bool is_detectable(const Matrix& a, const Matrix& c, double rel_tol = 1e-10) {
  return is_stabilizable(a.transpose(), c.transpose(), rel_tol);
}

/// Monic polynomial coefficients [1, p1, ..., pn] (descending powers of z)
/// whose roots are `roots`. Imaginary parts cancel for conjugate-closed sets.
inline std::vector<double> poly_from_roots(const ComplexVector& roots) {
  std::vector<std::complex<double>> c{1.0};
  for (Eigen::Index i = 0; i < roots.size(); ++i) {
    std::vector<std::complex<double>> next(c.size() + 1, 0.0);
    for (std::size_t j = 0; j < c.size(); ++j) {
      next[j] += c[j];
      next[j + 1] -= roots(i) * c[j];
    }
    c = std::move(next);
  }
  std::vector<double> out(c.size());
  std::transform(c.begin(), c.end(), out.begin(), [](auto z) { return z.real(); });
  return out;
}

/// Roots of the monic polynomial z^n + p1 z^(n-1) + ... + pn, given
/// coeffs = [p1, ..., pn].
inline ComplexVector roots_of_monic(const std::vector<double>& coeffs) {
  const auto n = static_cast<Eigen::Index>(coeffs.size());
  if (n == 0) return ComplexVector(0);
  Matrix companion = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) companion(0, j) = -coeffs[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  return eigenvalues(companion);
}

/// Characteristic polynomial coefficients [a1..an] of det(zI − A).
inline std::vector<double> characteristic_poly(const Matrix& a) {
  auto p = poly_from_roots(eigenvalues(a));
  return {p.begin() + 1, p.end()};
}

}  // namespace linalg
}  // namespace softpos
