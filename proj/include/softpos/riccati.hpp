#pragma once

// Discrete algebraic Riccati equation
//
//   P = AᵀPA − (AᵀPB + N)(R + BᵀPB)⁻¹(BᵀPA + Nᵀ) + Q
//
// solved by fixed-point iteration of the Riccati recursion from P₀ = Q,
// polished by Newton–Hewer steps, with a structured doubling fallback when
// the recursion does not settle.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "softpos/errors.hpp"
#include "softpos/linalg.hpp"

namespace softpos {

struct DareOptions {
  double rel_tol = 1e-12;
  int max_iterations = 100000;
  int newton_steps = 3;
  int max_doubling_steps = 100;
};

struct DareSolution {
  Matrix P;
  int iterations = 0;
  bool used_doubling = false;
  double residual = 0.0;  // max-abs entry of the DARE residual
};

struct DareAssumptions {
  bool q_psd = true;
  bool r_pd = true;
  bool stabilizable = true;
  bool detectable = true;

  std::string describe() const {
    std::ostringstream os;
    os << std::boolalpha << "Q PSD: " << q_psd << ", R PD: " << r_pd << ", (A,B) stabilizable: " << stabilizable
       << ", (A,Q^1/2) detectable: " << detectable;
    return os.str();
  }
  bool all() const { return q_psd && r_pd && stabilizable && detectable; }
};

class DareError : public NumericalError {
 public:
  DareError(const std::string& what, DareAssumptions checks)
      : NumericalError(what + " [" + checks.describe() + "]"), checks_(checks) {}
  const DareAssumptions& checks() const { return checks_; }

 private:
  DareAssumptions checks_;
};

namespace riccati_detail {

inline Matrix riccati_map(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, const Matrix& n,
                          const Matrix& p) {
  const Matrix atpb_n = a.transpose() * p * b + n;
  const Matrix s = r + b.transpose() * p * b;
  return linalg::symmetrize(a.transpose() * p * a - atpb_n * s.ldlt().solve(atpb_n.transpose()) + q);
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double rel_change(const Matrix& d, const Matrix& ref) { return max_abs(d) / std::max(1.0, max_abs(ref)); }

/// Solves X = Φᵀ X Φ + W via the Kronecker form (small n only).
inline Matrix discrete_lyapunov(const Matrix& phi, const Matrix& w) {
  const auto n = phi.rows();
  Matrix lhs = Matrix::Identity(n * n, n * n);
  // vec(Φᵀ X Φ) = (Φᵀ ⊗ Φᵀ) vec(X)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      lhs.block(i * n, j * n, n, n) -= phi(j, i) * phi.transpose();
    }
  }
  const Vector x = lhs.partialPivLu().solve(Eigen::Map<const Vector>(w.data(), n * n));
  return linalg::symmetrize(Eigen::Map<const Matrix>(x.data(), n, n));
}

inline Matrix gain(const Matrix& a, const Matrix& b, const Matrix& r, const Matrix& n, const Matrix& p) {
  const Matrix s = r + b.transpose() * p * b;
  return s.ldlt().solve(b.transpose() * p * a + n.transpose());
}

/// One Newton–Hewer step: evaluate the cost of the gain implied by P.
inline Matrix newton_step(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, const Matrix& n,
                          const Matrix& p) {
  const Matrix k = gain(a, b, r, n, p);
  const Matrix phi = a - b * k;
  const Matrix w = q - n * k - k.transpose() * n.transpose() + k.transpose() * r * k;
  return discrete_lyapunov(phi, linalg::symmetrize(w));
}

/// Structured doubling on the cross-term-free problem.
inline Matrix doubling(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, const Matrix& n,
                       const DareOptions& opt, int& steps) {
  Eigen::LLT<Matrix> r_llt(r);
  Matrix ak = a - b * r_llt.solve(n.transpose());
  Matrix gk = b * r_llt.solve(b.transpose());
  Matrix hk = linalg::symmetrize(q - n * r_llt.solve(n.transpose()));
  const auto dim = a.rows();
  const Matrix eye = Matrix::Identity(dim, dim);
  for (steps = 0; steps < opt.max_doubling_steps; ++steps) {
    const Eigen::PartialPivLU<Matrix> w(eye + gk * hk);
    const Matrix winv_a = w.solve(ak);
    const Matrix h_next = linalg::symmetrize(hk + ak.transpose() * hk * winv_a);
    const Matrix g_next = linalg::symmetrize(gk + ak * w.solve(gk) * ak.transpose());
    const Matrix a_next = ak * winv_a;
    const double change = rel_change(h_next - hk, h_next);
    hk = h_next;
    gk = g_next;
    ak = a_next;
    if (!hk.allFinite()) break;
    if (change < opt.rel_tol) break;
  }
  return hk;
}

}  // namespace riccati_detail

inline Matrix dare_residual(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, const Matrix& n,
                            const Matrix& p) {
  return riccati_detail::riccati_map(a, b, q, r, n, p) - p;
}

/// Residual bound accepted for a stabilizing solution.
inline bool dare_residual_ok(double residual, const Matrix& p) {
  return residual < 1e-8 * (1.0 + riccati_detail::max_abs(p));
}

inline DareAssumptions check_dare_assumptions(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                                              const Matrix& n) {
  DareAssumptions c;
  Eigen::LLT<Matrix> r_llt(linalg::symmetrize(r));
  c.r_pd = linalg::is_symmetric(r) && r_llt.info() == Eigen::Success;
  c.q_psd = linalg::is_symmetric(q, 1e-9) && linalg::is_psd(q);
  c.stabilizable = linalg::is_stabilizable(a, b);
  if (c.r_pd) {
    // Cross term removed: Ā = A − B R⁻¹ Nᵀ, Q̄ = Q − N R⁻¹ Nᵀ.
    const Matrix abar = a - b * r_llt.solve(n.transpose());
    const Matrix qbar = linalg::symmetrize(q - n * r_llt.solve(n.transpose()));
    if (!linalg::is_psd(qbar)) c.q_psd = false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(qbar);
    const Matrix root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                        es.eigenvectors().transpose();
    c.detectable = linalg::is_detectable(abar, root);
  }
  return c;
}

/// Stabilizing solution of the DARE. Pass an empty `n` for N = 0.
inline DareSolution solve_dare(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                               const Matrix& n_in = Matrix(), const DareOptions& opt = {}) {
  const auto dim = a.rows();
  const auto m = b.cols();
  const Matrix n = n_in.size() == 0 ? Matrix::Zero(dim, m) : n_in;
  if (a.cols() != dim || b.rows() != dim || q.rows() != dim || q.cols() != dim || r.rows() != m || r.cols() != m ||
      n.rows() != dim || n.cols() != m) {
    throw InvalidInput("solve_dare: inconsistent matrix dimensions");
  }
  const DareAssumptions checks = check_dare_assumptions(a, b, q, r, n);
  if (!checks.all()) throw DareError("solve_dare: preconditions violated", checks);

  DareSolution sol;
  Matrix p = linalg::symmetrize(q);
  bool converged = false;
  for (sol.iterations = 1; sol.iterations <= opt.max_iterations; ++sol.iterations) {
    const Matrix next = riccati_detail::riccati_map(a, b, q, r, n, p);
    if (!next.allFinite()) break;
    const double change = riccati_detail::rel_change(next - p, next);
    p = next;
    if (change < opt.rel_tol) {
      converged = true;
      break;
    }
  }
  if (!converged || !linalg::is_psd(p)) {
    int steps = 0;
    p = riccati_detail::doubling(a, b, q, r, n, opt, steps);
    sol.used_doubling = true;
    sol.iterations += steps;
  }

  double residual = riccati_detail::max_abs(dare_residual(a, b, q, r, n, p));
  for (int i = 0; i < opt.newton_steps && p.allFinite(); ++i) {
    const Matrix phi = a - b * riccati_detail::gain(a, b, r, n, p);
    if (linalg::spectral_radius(phi) >= 1.0) break;
    const Matrix candidate = riccati_detail::newton_step(a, b, q, r, n, p);
    const double cand_residual = riccati_detail::max_abs(dare_residual(a, b, q, r, n, candidate));
    if (!(cand_residual < residual)) break;
    p = candidate;
    residual = cand_residual;
  }

  if (!p.allFinite() || !linalg::is_psd(p)) {
    throw DareError("solve_dare: iteration produced an indefinite or non-finite solution", checks);
  }
  const Matrix phi = a - b * riccati_detail::gain(a, b, r, n, p);
  if (linalg::spectral_radius(phi) >= 1.0) {
    throw DareError("solve_dare: solution is not stabilizing", checks);
  }
  if (!dare_residual_ok(residual, p)) {
    throw DareError("solve_dare: residual " + std::to_string(residual) + " above bound", checks);
  }
  sol.P = p;
  sol.residual = residual;
  return sol;
}

}  // namespace softpos
