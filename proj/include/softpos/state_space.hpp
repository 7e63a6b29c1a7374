#pragma once

// Discrete LTI innovations model
//   x(k+1) = A x(k) + B u(k) + K e(k)
//   y(k)   = C x(k) + D u(k) + e(k)

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/linalg.hpp"

namespace softpos {

struct StateSpaceModel {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix D;
  Matrix K;
  double Ts = 1.0 / 15.0;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }

  /// Throws InvalidInput on inconsistent dimensions, non-finite entries or Ts ≤ 0.
  void validate() const {
    const auto n = A.rows();
    const auto m = B.cols();
    const auto p = C.rows();
    auto fail = [](const std::string& what) { throw InvalidInput("state-space model: " + what); };
    if (A.cols() != n) fail("A must be square");
    if (B.rows() != n) fail("B must have n rows");
    if (C.cols() != n) fail("C must have n columns");
    if (D.rows() != p || D.cols() != m) fail("D must be p×m");
    if (K.rows() != n || K.cols() != p) fail("K must be n×p");
    if (!(Ts > 0.0) || !std::isfinite(Ts)) fail("Ts must be > 0");
    for (const Matrix* mat : {&A, &B, &C, &D, &K}) {
      if (!mat->allFinite()) fail("entries must be finite");
    }
  }

  bool stabilizable() const { return linalg::is_stabilizable(A, B); }
  bool detectable() const { return linalg::is_detectable(A, C); }
  /// Both PBH conditions required before LQG synthesis.
  bool control_ready() const { return stabilizable() && detectable(); }

  /// Steady-state gain C(I − A)⁻¹B + D.
  Matrix dc_gain() const {
    const Matrix i = Matrix::Identity(states(), states());
    return C * (i - A).partialPivLu().solve(B) + D;
  }
};

/// The identified second-order soft-robot plant (head height vs. valve drive).
inline StateSpaceModel rig_plant() {
  StateSpaceModel m;
  m.A.resize(2, 2);
  m.A << 0.0, 1.0, -0.9883, 1.988;
  m.B.resize(2, 1);
  m.B << -3.03e-7, -4.254e-7;
  m.C.resize(1, 2);
  m.C << 1.0, 0.0;
  m.D = Matrix::Zero(1, 1);
  m.K.resize(2, 1);
  m.K << 0.9253, 0.9604;
  m.Ts = 1.0 / 15.0;
  return m;
}

/// Runs the innovations recursion for a single-input single-output model.
/// `u` and `e` must have equal lengths; x0 defaults to zero.
inline std::vector<double> simulate_lti(const StateSpaceModel& model, std::span<const double> u,
                                        std::span<const double> e, const Vector& x0 = Vector()) {
  model.validate();
  if (model.inputs() != 1 || model.outputs() != 1) {
    throw InvalidInput("simulate_lti: single-input single-output model required");
  }
  if (u.size() != e.size()) throw InvalidInput("simulate_lti: u and e lengths differ");
  Vector x = x0.size() == 0 ? Vector::Zero(model.states()) : x0;
  if (x.size() != model.states()) throw InvalidInput("simulate_lti: x0 dimension mismatch");
  const Vector b = model.B.col(0);
  const Vector k = model.K.col(0);
  const Eigen::RowVectorXd c = model.C.row(0);
  const double d = model.D(0, 0);
  std::vector<double> y(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    y[i] = c.dot(x) + d * u[i] + e[i];
    x = model.A * x + b * u[i] + k * e[i];
  }
  return y;
}

/// One-step-ahead predictor of the innovations model:
///   ŷ(k) = C x̂(k) + D u(k),  x̂(k+1) = A x̂(k) + B u(k) + K (y(k) − ŷ(k)).
inline std::vector<double> predict_one_step(const StateSpaceModel& model, std::span<const double> u,
                                            std::span<const double> y, const Vector& x0 = Vector()) {
  model.validate();
  if (u.size() != y.size()) throw InvalidInput("predict_one_step: u and y lengths differ");
  Vector x = x0.size() == 0 ? Vector::Zero(model.states()) : x0;
  const Vector b = model.B.col(0);
  const Vector k = model.K.col(0);
  const Eigen::RowVectorXd c = model.C.row(0);
  const double d = model.D(0, 0);
  std::vector<double> yhat(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    yhat[i] = c.dot(x) + d * u[i];
    x = model.A * x + b * u[i] + k * (y[i] - yhat[i]);
  }
  return yhat;
}

/// Similarity transform to observability canonical form, C = [1 0 … 0] and
/// state i = i-step-ahead free response of y. Requires (A, C) observable.
inline StateSpaceModel to_observability_canonical(const StateSpaceModel& model) {
  model.validate();
  const auto n = model.states();
  Matrix obs(n, n);
  Matrix row = model.C.row(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    obs.row(i) = row;
    row = row * model.A;
  }
  Eigen::FullPivLU<Matrix> lu(obs);
  if (!lu.isInvertible()) throw NumericalError("to_observability_canonical: (A, C) not observable");
  StateSpaceModel out = model;
  out.A = obs * model.A * lu.inverse();
  out.B = obs * model.B;
  out.C = model.C * lu.inverse();
  out.K = obs * model.K;
  return out;
}

}  // namespace softpos
