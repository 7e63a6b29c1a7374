#pragma once

// State-space realization from input/output data.
//
// 1. A high-order ARX model approximates the one-step predictor as a finite
//    function of past outputs and inputs.
// 2. Iterating that predictor r steps ahead with zero future input gives, for
//    every time k, a vector Ŷ_r(k) of free-response predictions. Stacked over
//    k these form a matrix whose rank is the system order.
// 3. A rank-n SVD truncation picks n linear combinations of Ŷ_r as the state.
// 4. (A, B) and C follow by least squares on the state sequence; K is the
//    steady-state Kalman predictor gain of the regression residuals.
// 5. Optionally, the prediction-error cost is minimized over all parameters
//    (via the input/output-equivalent ARMAX form).

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/linalg.hpp"
#include "softpos/riccati.hpp"
#include "softpos/state_space.hpp"
#include "softpos/sysid/armax.hpp"
#include "softpos/sysid/dataset.hpp"

namespace softpos::sysid {

inline constexpr std::size_t kDefaultArxLags = 20;
inline constexpr double kRankTolerance = 1e-10;

struct RealizationOptions {
  std::size_t arx_lags = kDefaultArxLags;
  std::size_t horizon = 0;  // prediction horizon r; 0 selects max(n + 1, 2n)
  bool pem_refine = false;
  bool canonical = true;    // observability canonical form, C = [1 0 … 0]
};

struct Realization {
  StateSpaceModel model;
  std::vector<double> singular_values;  // of the prediction matrix, descending
  std::size_t horizon = 0;
  bool canonical = false;
  std::vector<double> pem_cost;  // empty unless refined
};

namespace realization_detail {

struct ArxPredictor {
  Vector alpha;  // coefficients on y(k−1..k−s)
  Vector beta;   // coefficients on u(k−1..k−s)
};

inline ArxPredictor fit_arx(std::span<const double> u, std::span<const double> y, std::size_t s) {
  const std::size_t n = y.size();
  const auto rows = static_cast<Eigen::Index>(n - s);
  const auto si = static_cast<Eigen::Index>(s);
  Matrix phi(rows, 2 * si);
  Vector t(rows);
  for (std::size_t k = s; k < n; ++k) {
    const auto r = static_cast<Eigen::Index>(k - s);
    for (std::size_t i = 1; i <= s; ++i) {
      phi(r, static_cast<Eigen::Index>(i - 1)) = y[k - i];
      phi(r, si + static_cast<Eigen::Index>(i - 1)) = u[k - i];
    }
    t(r) = y[k];
  }
  const Vector theta = phi.completeOrthogonalDecomposition().solve(t);
  return {theta.head(si), theta.tail(si)};
}

/// Row j (0-based) of column k holds the (j+1)-step-ahead prediction made at
/// time k from the data up to k − 1, with u ≡ 0 from time k on.
inline Matrix prediction_matrix(const ArxPredictor& arx, std::span<const double> u, std::span<const double> y,
                                std::size_t s, std::size_t r, std::size_t& first) {
  first = s;
  const std::size_t last = y.size() - r;  // exclusive
  Matrix yr(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(last - first));
  std::vector<double> py(s + r), pu(s + r);
  for (std::size_t k = first; k < last; ++k) {
    for (std::size_t i = 0; i < s; ++i) {
      py[i] = y[k - s + i];
      pu[i] = u[k - s + i];
    }
    for (std::size_t j = 0; j < r; ++j) {
      double p = 0.0;
      for (std::size_t i = 1; i <= s; ++i) {
        p += arx.alpha(static_cast<Eigen::Index>(i - 1)) * py[s + j - i] +
             arx.beta(static_cast<Eigen::Index>(i - 1)) * pu[s + j - i];
      }
      py[s + j] = p;
      pu[s + j] = 0.0;
      yr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k - first)) = p;
    }
  }
  return yr;
}

/// Kalman predictor gain for x⁺ = A x + w, y = C x + v with cov(w) = Q,
/// cov(v) = R, cov(w, v) = S. Returns zero when the residuals carry no usable
/// noise model (e.g. noise-free data).
inline Matrix kalman_predictor_gain(const Matrix& a, const Matrix& c, Matrix q, Matrix r, const Matrix& s) {
  const double scale = std::max({1e-300, q.cwiseAbs().maxCoeff(), r.cwiseAbs().maxCoeff()});
  r += Matrix::Identity(r.rows(), r.cols()) * 1e-10 * scale;
  q = linalg::symmetrize(q);
  try {
    const auto sol = solve_dare(a.transpose(), c.transpose(), q, r, s);
    const Matrix& sigma = sol.P;
    return (a * sigma * c.transpose() + s) * (c * sigma * c.transpose() + r).inverse();
  } catch (const NumericalError&) {
    return Matrix::Zero(a.rows(), c.rows());
  }
}

}  // namespace realization_detail

/// Realizes an order-n innovations model from u, y (callers pass the training
/// partition). Throws NumericalError when the data do not support order n.
inline Realization realize_statespace(std::span<const double> u_in, std::span<const double> y_in, std::size_t n,
                                      double ts, const RealizationOptions& opt = {}) {
  using namespace realization_detail;
  if (n < 1) throw InvalidInput("realize_statespace: order must be >= 1");
  if (u_in.size() != y_in.size()) throw InvalidInput("realize_statespace: u and y lengths differ");
  if (y_in.size() < 20 * n) throw InvalidInput("realize_statespace: need at least 20·n training samples");
  const std::size_t s = opt.arx_lags;
  const std::size_t r = opt.horizon ? opt.horizon : std::max(n + 1, 2 * n);
  if (r < n) throw InvalidInput("realize_statespace: horizon must be >= order");
  if (y_in.size() <= 4 * s + r) throw InvalidInput("realize_statespace: too few samples for the ARX pre-fit");

  const double su = armax_detail::rms(u_in) > 0.0 ? armax_detail::rms(u_in) : 1.0;
  const double sy = armax_detail::rms(y_in) > 0.0 ? armax_detail::rms(y_in) : 1.0;
  std::vector<double> u(u_in.begin(), u_in.end());
  std::vector<double> y(y_in.begin(), y_in.end());
  for (auto& x : u) x /= su;
  for (auto& x : y) x /= sy;

  const ArxPredictor arx = fit_arx(u, y, s);
  std::size_t first = 0;
  const Matrix yr = prediction_matrix(arx, u, y, s, r, first);
  Eigen::BDCSVD<Matrix> svd(yr, Eigen::ComputeThinU);
  const Vector sv = svd.singularValues();
  Realization out;
  out.horizon = r;
  out.singular_values.assign(sv.data(), sv.data() + sv.size());
  const auto ni = static_cast<Eigen::Index>(n);
  if (!(sv(0) > 0.0) || sv(ni - 1) / sv(0) < kRankTolerance) {
    throw NumericalError("realize_statespace: order " + std::to_string(n) +
                         " exceeds the numerical rank of the data; choose a lower order");
  }

  const Matrix x = svd.matrixU().leftCols(ni).transpose() * yr;  // n × M
  const auto m = x.cols();
  // x(k+1) = A x(k) + B u(k)
  Matrix reg(ni + 1, m - 1);
  reg.topRows(ni) = x.leftCols(m - 1);
  for (Eigen::Index j = 0; j + 1 < m; ++j) reg(ni, j) = u[first + static_cast<std::size_t>(j)];
  const Matrix next = x.rightCols(m - 1);
  const Matrix theta = reg.transpose().colPivHouseholderQr().solve(next.transpose()).transpose();
  const Matrix a = theta.leftCols(ni);
  const Matrix b = theta.rightCols(1);
  // y(k) = C x(k)
  Vector yk(m);
  for (Eigen::Index j = 0; j < m; ++j) yk(j) = y[first + static_cast<std::size_t>(j)];
  const Matrix c = x.transpose().colPivHouseholderQr().solve(yk).transpose();

  const Matrix w = next - theta * reg;
  const Matrix v = (yk.transpose() - c * x).leftCols(m - 1);
  const double count = static_cast<double>(m - 1);
  const Matrix qw = w * w.transpose() / count;
  const Matrix rv = v * v.transpose() / count;
  const Matrix sw = w * v.transpose() / count;
  const Matrix k = kalman_predictor_gain(a, c, qw, rv, sw);

  StateSpaceModel model;
  model.A = a;
  model.B = b / su;
  model.C = c * sy;
  model.D = Matrix::Zero(1, 1);
  model.K = k / sy;
  model.Ts = ts;

  if (opt.pem_refine) {
    ArmaxModel am = statespace_to_armax(model);
    bool reflected = false;
    am.c = armax_detail::reflect_c(am.c, reflected);
    for (auto& bi : am.b) bi *= su / sy;
    const std::size_t skip = am.max_lag();
    armax_detail::refine(am.a, am.b, am.c, u, y, skip, ArmaxOptions{}, out.pem_cost);
    for (auto& bi : am.b) bi *= sy / su;
    for (auto& cost : out.pem_cost) cost *= sy * sy;
    am.Ts = ts;
    model = armax_to_statespace(am);
  }

  if (opt.canonical) {
    try {
      model = to_observability_canonical(model);
      out.canonical = true;
    } catch (const NumericalError&) {
      out.canonical = false;
    }
  }
  out.model = std::move(model);
  return out;
}

inline Realization realize_statespace(const IdDataset& ds, std::size_t n, const RealizationOptions& opt = {}) {
  ds.validate();
  return realize_statespace(ds.train_u(), ds.train_y(), n, ds.Ts, opt);
}

}  // namespace softpos::sysid
