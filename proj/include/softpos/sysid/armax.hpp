#pragma once

// ARMAX prediction-error identification.
//
//   A(q) y(k) = B(q) u(k) + C(q) e(k)
//   A(q) = 1 + a1 q⁻¹ + … + a_na q⁻ⁿᵃ
//   B(q) =     b1 q⁻¹ + … + b_nb q⁻ⁿᵇ
//   C(q) = 1 + c1 q⁻¹ + … + c_nc q⁻ⁿᶜ
//
// One-step predictor (pseudo-linear form):
//   ŷ(k) = −Σ a_i y(k−i) + Σ b_i u(k−i) + Σ c_i ε(k−i),   ε = y − ŷ
//
// Estimation runs pseudo-linear regression to get a starting point, then
// Levenberg–Marquardt on V = ½ Σ ε² with the gradient ψ = φ / C(q).

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/linalg.hpp"
#include "softpos/state_space.hpp"
#include "softpos/sysid/dataset.hpp"

namespace softpos::sysid {

struct ArmaxModel {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;
  double lambda = 0.0;  // innovation variance, y units²
  double Ts = 1.0 / 15.0;
  bool c_reflected = false;          // C(q) had roots on/outside the unit circle
  std::vector<double> cost_history;  // V after each accepted iteration

  std::size_t na() const { return a.size(); }
  std::size_t nb() const { return b.size(); }
  std::size_t nc() const { return c.size(); }
  std::size_t max_lag() const { return std::max({a.size(), b.size(), c.size()}); }
  std::size_t params() const { return a.size() + b.size() + c.size(); }

  void validate() const {
    if (params() == 0) throw InvalidInput("armax: na, nb, nc must not all be zero");
    for (const auto* v : {&a, &b, &c}) {
      for (const double x : *v) {
        if (!std::isfinite(x)) throw InvalidInput("armax: non-finite coefficient");
      }
    }
  }
};

struct ArmaxOptions {
  int max_iterations = 100;
  double rel_tol = 1e-9;
  int plr_passes = 10;
  bool normalize = true;  // scale u and y to unit RMS while estimating
};

namespace armax_detail {

/// Roots of C(z) = zⁿ + c1 zⁿ⁻¹ + … + cn.
inline ComplexVector c_roots(const std::vector<double>& c) { return linalg::roots_of_monic(c); }

inline bool c_stable(const std::vector<double>& c) {
  const auto r = c_roots(c);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (std::abs(r(i)) >= 1.0) return false;
  }
  return true;
}

/// Mirrors roots with |z| ≥ 1 to 1/z̄. Roots exactly on the circle are pulled
/// inside by a small margin so the predictor filter stays strictly stable.
inline std::vector<double> reflect_c(const std::vector<double>& c, bool& reflected) {
  ComplexVector r = c_roots(c);
  reflected = false;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double mag = std::abs(r(i));
    if (mag >= 1.0) {
      reflected = true;
      r(i) = 1.0 / std::conj(r(i));
      if (mag == 1.0) r(i) *= 0.999;
    }
  }
  if (!reflected) return c;
  const auto p = linalg::poly_from_roots(r);
  return {p.begin() + 1, p.end()};
}

/// Prediction errors with zero initial conditions. Returns ε for every k.
inline std::vector<double> residuals(const std::vector<double>& a, const std::vector<double>& b,
                                     const std::vector<double>& c, std::span<const double> u,
                                     std::span<const double> y) {
  const std::size_t n = y.size();
  std::vector<double> eps(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double yhat = 0.0;
    for (std::size_t i = 1; i <= a.size() && i <= k; ++i) yhat -= a[i - 1] * y[k - i];
    for (std::size_t i = 1; i <= b.size() && i <= k; ++i) yhat += b[i - 1] * u[k - i];
    for (std::size_t i = 1; i <= c.size() && i <= k; ++i) yhat += c[i - 1] * eps[k - i];
    eps[k] = y[k] - yhat;
  }
  return eps;
}

/// Regressor φ(k) = [−y(k−1..na), u(k−1..nb), ε(k−1..nc)], zero before k = 0.
inline Matrix regressor(std::size_t na, std::size_t nb, std::size_t nc, std::span<const double> u,
                        std::span<const double> y, const std::vector<double>& eps) {
  const std::size_t n = y.size();
  Matrix phi = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(na + nb + nc));
  for (std::size_t k = 0; k < n; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    for (std::size_t i = 1; i <= na && i <= k; ++i) phi(row, static_cast<Eigen::Index>(i - 1)) = -y[k - i];
    for (std::size_t i = 1; i <= nb && i <= k; ++i) phi(row, static_cast<Eigen::Index>(na + i - 1)) = u[k - i];
    for (std::size_t i = 1; i <= nc && i <= k; ++i) phi(row, static_cast<Eigen::Index>(na + nb + i - 1)) = eps[k - i];
  }
  return phi;
}

/// ψ = φ filtered through 1/C(q).
inline Matrix filter_by_inverse_c(const Matrix& phi, const std::vector<double>& c) {
  Matrix psi = phi;
  for (Eigen::Index k = 0; k < psi.rows(); ++k) {
    for (std::size_t i = 1; i <= c.size() && static_cast<Eigen::Index>(i) <= k; ++i) {
      psi.row(k) -= c[i - 1] * psi.row(k - static_cast<Eigen::Index>(i));
    }
  }
  return psi;
}

inline double cost(const std::vector<double>& eps, std::size_t skip) {
  double v = 0.0;
  for (std::size_t k = skip; k < eps.size(); ++k) v += eps[k] * eps[k];
  return 0.5 * v;
}

inline std::string column_name(std::size_t j, std::size_t na, std::size_t nb) {
  if (j < na) return "a" + std::to_string(j + 1);
  if (j < na + nb) return "b" + std::to_string(j - na + 1);
  return "c" + std::to_string(j - na - nb + 1);
}

/// Least squares on rows [skip, N). Throws naming columns the data cannot
/// resolve when the regressor is rank-deficient.
inline Vector solve_ls(const Matrix& phi, std::span<const double> y, std::size_t skip, std::size_t na,
                       std::size_t nb) {
  const auto rows = phi.rows() - static_cast<Eigen::Index>(skip);
  const Matrix x = phi.bottomRows(rows);
  Vector t(rows);
  for (Eigen::Index i = 0; i < rows; ++i) t(i) = y[skip + static_cast<std::size_t>(i)];
  Vector scale = x.colwise().norm().transpose();
  const double max_scale = scale.size() ? scale.maxCoeff() : 0.0;
  Matrix xs = x;
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    if (scale(j) > 0.0) xs.col(j) /= scale(j);
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(xs);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  std::vector<std::size_t> deficient;
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    if (!(scale(j) > 1e-12 * std::max(1.0, max_scale))) deficient.push_back(static_cast<std::size_t>(j));
  }
  if (deficient.empty() && rank < xs.cols()) {
    for (Eigen::Index j = rank; j < xs.cols(); ++j) {
      deficient.push_back(static_cast<std::size_t>(qr.colsPermutation().indices()(j)));
    }
  }
  if (!deficient.empty()) {
    std::sort(deficient.begin(), deficient.end());
    std::string names;
    for (const auto j : deficient) names += (names.empty() ? "" : ", ") + column_name(j, na, nb);
    throw NumericalError("estimate_armax: rank-deficient regressor (insufficient excitation); columns " + names);
  }
  Vector theta = qr.solve(t);
  for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) /= scale(j);
  return theta;
}

inline void unpack(const Vector& theta, std::size_t na, std::size_t nb, std::size_t nc, std::vector<double>& a,
                   std::vector<double>& b, std::vector<double>& c) {
  a.assign(theta.data(), theta.data() + na);
  b.assign(theta.data() + na, theta.data() + na + nb);
  c.assign(theta.data() + na + nb, theta.data() + na + nb + nc);
}

inline Vector pack(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c) {
  Vector theta(static_cast<Eigen::Index>(a.size() + b.size() + c.size()));
  Eigen::Index j = 0;
  for (const auto* v : {&a, &b, &c}) {
    for (const double x : *v) theta(j++) = x;
  }
  return theta;
}

inline double rms(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

/// Levenberg–Marquardt on V(θ) from a stable-C starting point. Every accepted
/// step strictly lowers V, so the recorded history is monotone.
inline void refine(std::vector<double>& a, std::vector<double>& b, std::vector<double>& c, std::span<const double> u,
                   std::span<const double> y, std::size_t skip, const ArmaxOptions& opt,
                   std::vector<double>& history) {
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t nc = c.size();
  auto eps = residuals(a, b, c, u, y);
  double v = cost(eps, skip);
  history.push_back(v);
  double mu = 1e-3;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Matrix psi = filter_by_inverse_c(regressor(na, nb, nc, u, y, eps), c);
    const auto rows = psi.rows() - static_cast<Eigen::Index>(skip);
    const Matrix j = psi.bottomRows(rows);
    Vector e(rows);
    for (Eigen::Index i = 0; i < rows; ++i) e(i) = eps[skip + static_cast<std::size_t>(i)];
    const Matrix h = j.transpose() * j;
    const Vector g = j.transpose() * e;
    const Vector diag = h.diagonal().cwiseMax(1e-12 * std::max(1.0, h.diagonal().maxCoeff()));

    bool accepted = false;
    for (int tries = 0; tries < 30; ++tries) {
      Matrix lhs = h;
      lhs.diagonal() += mu * diag;
      const Vector step = lhs.ldlt().solve(g);
      if (!step.allFinite()) {
        mu *= 10.0;
        continue;
      }
      std::vector<double> a2, b2, c2;
      unpack(pack(a, b, c) + step, na, nb, nc, a2, b2, c2);
      if (!c_stable(c2)) {
        mu *= 10.0;
        continue;
      }
      auto eps2 = residuals(a2, b2, c2, u, y);
      const double v2 = cost(eps2, skip);
      if (std::isfinite(v2) && v2 < v) {
        const double rel = (v - v2) / std::max(v, 1e-300);
        a = std::move(a2);
        b = std::move(b2);
        c = std::move(c2);
        eps = std::move(eps2);
        v = v2;
        history.push_back(v);
        mu = std::max(mu / 10.0, 1e-12);
        accepted = true;
        if (rel < opt.rel_tol) return;
        break;
      }
      mu *= 10.0;
    }
    if (!accepted) return;  // no descent direction left: at a local minimum
  }
}

}  // namespace armax_detail

/// One-step-ahead predictions over the whole dataset (zero initial conditions).
inline std::vector<double> predict_armax(const ArmaxModel& model, std::span<const double> u,
                                         std::span<const double> y) {
  model.validate();
  if (u.size() != y.size()) throw InvalidInput("predict_armax: u and y lengths differ");
  if (y.size() <= model.max_lag()) throw InvalidInput("predict_armax: dataset shorter than the model lags");
  if (!armax_detail::c_stable(model.c)) {
    throw NumericalError("predict_armax: C(q) has roots on or outside the unit circle (predictor would diverge)");
  }
  const auto eps = armax_detail::residuals(model.a, model.b, model.c, u, y);
  std::vector<double> yhat(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) yhat[k] = y[k] - eps[k];
  return yhat;
}

inline std::vector<double> predict_armax(const ArmaxModel& model, const IdDataset& ds) {
  return predict_armax(model, ds.u, ds.y);
}

/// Fits an ARMAX(na, nb, nc) model on the given records (callers pass the
/// training partition). Scaling to unit RMS keeps the normal equations well
/// conditioned when u and y differ by orders of magnitude.
inline ArmaxModel estimate_armax(std::span<const double> u_in, std::span<const double> y_in, std::size_t na,
                                 std::size_t nb, std::size_t nc, const ArmaxOptions& opt = {}) {
  using namespace armax_detail;
  if (u_in.size() != y_in.size()) throw InvalidInput("estimate_armax: u and y lengths differ");
  const std::size_t d = na + nb + nc;
  if (d == 0) throw InvalidInput("estimate_armax: na, nb, nc must not all be zero");
  if (y_in.size() < 10 * d) throw InvalidInput("estimate_armax: need at least 10·(na+nb+nc) samples");
  const std::size_t skip = std::max({na, nb, nc});

  const double su = opt.normalize && rms(u_in) > 0.0 ? rms(u_in) : 1.0;
  const double sy = opt.normalize && rms(y_in) > 0.0 ? rms(y_in) : 1.0;
  std::vector<double> u(u_in.begin(), u_in.end());
  std::vector<double> y(y_in.begin(), y_in.end());
  for (auto& x : u) x /= su;
  for (auto& x : y) x /= sy;

  std::vector<double> a(na, 0.0), b(nb, 0.0), c(nc, 0.0);
  // Pseudo-linear regression: ARX first, then re-estimate with lagged residuals.
  if (na + nb > 0) {
    const Matrix phi = regressor(na, nb, 0, u, y, {});
    std::vector<double> c0;
    unpack(solve_ls(phi, y, skip, na, nb), na, nb, 0, a, b, c0);
  }
  bool reflected = false;
  if (nc > 0) {
    for (int pass = 0; pass < opt.plr_passes; ++pass) {
      const auto eps = residuals(a, b, c, u, y);
      const Vector theta = solve_ls(regressor(na, nb, nc, u, y, eps), y, skip, na, nb);
      unpack(theta, na, nb, nc, a, b, c);
      bool r = false;
      c = reflect_c(c, r);
      reflected = reflected || r;
    }
  }

  ArmaxModel m;
  refine(a, b, c, u, y, skip, opt, m.cost_history);
  for (auto& x : b) x *= sy / su;
  for (auto& v : m.cost_history) v *= sy * sy;
  m.a = std::move(a);
  m.b = std::move(b);
  m.c = std::move(c);
  m.c_reflected = reflected;
  const std::size_t n_eff = y.size() - skip;
  m.lambda = 2.0 * m.cost_history.back() / static_cast<double>(n_eff);
  return m;
}

inline ArmaxModel estimate_armax(const IdDataset& ds, std::size_t na, std::size_t nb, std::size_t nc,
                                 const ArmaxOptions& opt = {}) {
  ds.validate();
  auto m = estimate_armax(ds.train_u(), ds.train_y(), na, nb, nc, opt);
  m.Ts = ds.Ts;
  return m;
}

/// Observer canonical innovations form of order n = max(na, nb, nc):
/// A has −a down its first column and ones on the superdiagonal,
/// B = b, K = c − a, C = [1 0 … 0], D = 0.
inline StateSpaceModel armax_to_statespace(const ArmaxModel& model) {
  model.validate();
  const std::size_t n = model.max_lag();
  auto at = [](const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; };
  const auto ni = static_cast<Eigen::Index>(n);
  StateSpaceModel ss;
  ss.A = Matrix::Zero(ni, ni);
  ss.B = Matrix::Zero(ni, 1);
  ss.K = Matrix::Zero(ni, 1);
  ss.C = Matrix::Zero(1, ni);
  ss.D = Matrix::Zero(1, 1);
  ss.C(0, 0) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    ss.A(r, 0) = -at(model.a, i);
    if (i + 1 < n) ss.A(r, r + 1) = 1.0;
    ss.B(r, 0) = at(model.b, i);
    ss.K(r, 0) = at(model.c, i) - at(model.a, i);
  }
  ss.Ts = model.Ts;
  return ss;
}

/// Input/output-equivalent ARMAX(n, n, n) of a SISO innovations model with
/// D = 0: A(q) from the characteristic polynomial, B and C from the Markov
/// parameters of (A, B, C) and (A, K, C).
inline ArmaxModel statespace_to_armax(const StateSpaceModel& ss) {
  ss.validate();
  if (ss.inputs() != 1 || ss.outputs() != 1) throw InvalidInput("statespace_to_armax: SISO model required");
  if (ss.D.cwiseAbs().maxCoeff() != 0.0) throw InvalidInput("statespace_to_armax: D must be zero");
  const auto n = static_cast<std::size_t>(ss.states());
  ArmaxModel m;
  m.Ts = ss.Ts;
  m.a = linalg::characteristic_poly(ss.A);
  std::vector<double> g(n + 1, 0.0), h(n + 1, 0.0);  // Markov parameters, index 1..n
  Matrix pow = Matrix::Identity(ss.states(), ss.states());
  for (std::size_t j = 1; j <= n; ++j) {
    g[j] = (ss.C * pow * ss.B)(0, 0);
    h[j] = (ss.C * pow * ss.K)(0, 0);
    pow = pow * ss.A;
  }
  m.b.assign(n, 0.0);
  m.c.assign(n, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    double bk = g[k];
    double ck = m.a[k - 1] + h[k];
    for (std::size_t i = 1; i < k; ++i) {
      bk += m.a[i - 1] * g[k - i];
      ck += m.a[i - 1] * h[k - i];
    }
    m.b[k - 1] = bk;
    m.c[k - 1] = ck;
  }
  return m;
}

}  // namespace softpos::sysid
