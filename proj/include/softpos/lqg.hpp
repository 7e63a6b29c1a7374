#pragma once

// LQG synthesis for the identified plant: LQ regulator from the control DARE,
// steady-state observer (predictor-form Kalman filter) from the dual DARE, and
// a DC feedforward for constant references.

#include <cmath>
#include <string>

#include "softpos/errors.hpp"
#include "softpos/linalg.hpp"
#include "softpos/riccati.hpp"
#include "softpos/state_space.hpp"

namespace softpos::lqg {

/// Regulator and observer weights used on the hardware rig.
inline Matrix rig_state_weight() { return 1.0566 * Matrix::Identity(2, 2); }
inline Matrix rig_input_weight() { return Matrix::Constant(1, 1, 0.058006); }
inline Matrix rig_observer_process_cov() { return 0.4511 * Matrix::Identity(2, 2); }
inline Matrix rig_observer_measurement_cov() { return Matrix::Constant(1, 1, 0.01); }

struct LqWeights {
  Matrix Q;
  Matrix R;
  Matrix N;  // empty means zero

  Matrix cross(Eigen::Index n, Eigen::Index m) const { return N.size() == 0 ? Matrix::Zero(n, m) : N; }
};

struct LqgDesign {
  Matrix P;      // control Riccati solution
  Matrix Sigma;  // filter Riccati solution
  Matrix Kopt;   // m×n, u = −Kopt x̂
  Matrix Kobs;   // n×p, predictor-form observer gain
  Matrix Qe, Re;
  Matrix Nr;     // m×p reference feedforward
  double control_residual = 0.0;
  double observer_residual = 0.0;
  double regulator_spectral_radius = 0.0;  // ρ(A − B Kopt)
  double observer_spectral_radius = 0.0;   // ρ(A − Kobs C)
  int control_iterations = 0;
  int observer_iterations = 0;

  bool stable() const { return regulator_spectral_radius < 1.0 && observer_spectral_radius < 1.0; }
};

/// Kopt = (R + BᵀPB)⁻¹(BᵀPA + Nᵀ).
inline Matrix lqr_gain(const Matrix& a, const Matrix& b, const Matrix& p, const Matrix& r, const Matrix& n = Matrix()) {
  const Matrix cross = n.size() == 0 ? Matrix::Zero(a.rows(), b.cols()) : n;
  const Matrix s = r + b.transpose() * p * b;
  Eigen::LLT<Matrix> llt(linalg::symmetrize(s));
  if (llt.info() != Eigen::Success) throw NumericalError("lqr_gain: R + BᵀPB is not positive definite");
  return llt.solve(b.transpose() * p * a + cross.transpose());
}

struct ObserverGain {
  Matrix Kobs;
  DareSolution riccati;
};

/// Kobs = AΣCᵀ(CΣCᵀ + Re)⁻¹ with Σ from the filter Riccati equation.
inline ObserverGain observer_gain(const Matrix& a, const Matrix& c, const Matrix& qe, const Matrix& re) {
  ObserverGain out;
  out.riccati = solve_dare(a.transpose(), c.transpose(), qe, re);
  const Matrix& sigma = out.riccati.P;
  const Matrix s = c * sigma * c.transpose() + re;
  out.Kobs = (a * sigma * c.transpose()) * s.inverse();
  return out;
}

/// x̂(k+1) = A x̂(k) − Kobs (C x̂(k) − y(k)) + B u(k).
inline Vector observer_step(const StateSpaceModel& model, const Matrix& kobs, const Vector& xhat, const Vector& y,
                            const Vector& u) {
  return model.A * xhat - kobs * (model.C * xhat - y) + model.B * u;
}

/// Scales the reference so that the closed-loop DC gain r → y is one.
inline Matrix reference_feedforward(const StateSpaceModel& model, const Matrix& kopt) {
  const auto n = model.states();
  const Matrix closed = Matrix::Identity(n, n) - model.A + model.B * kopt;
  const Matrix dc = model.C * closed.partialPivLu().solve(model.B) + model.D;
  if (dc.rows() != dc.cols()) throw InvalidInput("reference_feedforward: square plant required");
  Eigen::FullPivLU<Matrix> lu(dc);
  if (!lu.isInvertible() || dc.cwiseAbs().maxCoeff() == 0.0) {
    throw NumericalError("reference_feedforward: closed-loop DC gain is zero (output not trackable)");
  }
  return lu.inverse();
}

/// Closed-loop DC gain from reference to output for a given design.
inline Matrix closed_loop_dc_gain(const StateSpaceModel& model, const Matrix& kopt, const Matrix& nr) {
  const auto n = model.states();
  const Matrix closed = Matrix::Identity(n, n) - model.A + model.B * kopt;
  return (model.C * closed.partialPivLu().solve(model.B) + model.D) * nr;
}

/// Plant + observer dynamics in coordinates [x; x̂]:
///   x(k+1)  = A x − B Kopt x̂
///   x̂(k+1) = Kobs C x + (A − B Kopt − Kobs C) x̂
inline Matrix closed_loop_matrix(const StateSpaceModel& model, const LqgDesign& design) {
  const auto n = model.states();
  Matrix m(2 * n, 2 * n);
  m.topLeftCorner(n, n) = model.A;
  m.topRightCorner(n, n) = -model.B * design.Kopt;
  m.bottomLeftCorner(n, n) = design.Kobs * model.C;
  m.bottomRightCorner(n, n) = model.A - model.B * design.Kopt - design.Kobs * model.C;
  return m;
}

/// Σ_{k<steps} (xᵀQx + uᵀRu + 2xᵀNu) + x_stepsᵀ S x_steps under u = −K x, noise-free.
/// With S = P from the DARE the state feedback Kopt minimizes this for any horizon.
inline double lq_cost(const Matrix& a, const Matrix& b, const LqWeights& w, const Matrix& k, const Vector& x0,
                      int steps, const Matrix& terminal = Matrix()) {
  const Matrix cross = w.cross(a.rows(), b.cols());
  Vector x = x0;
  double j = 0.0;
  for (int i = 0; i < steps; ++i) {
    const Vector u = -k * x;
    j += x.dot(w.Q * x) + u.dot(w.R * u) + 2.0 * x.dot(cross * u);
    x = a * x + b * u;
  }
  if (terminal.size() != 0) j += x.dot(terminal * x);
  return j;
}

inline LqgDesign design_lqg(const StateSpaceModel& model, const LqWeights& weights, const Matrix& qe,
                            const Matrix& re) {
  model.validate();
  const auto n = model.states();
  const auto m = model.inputs();
  const Matrix cross = weights.cross(n, m);
  LqgDesign d;
  const DareSolution ctrl = solve_dare(model.A, model.B, weights.Q, weights.R, cross);
  d.P = ctrl.P;
  d.control_residual = ctrl.residual;
  d.control_iterations = ctrl.iterations;
  d.Kopt = lqr_gain(model.A, model.B, d.P, weights.R, cross);
  const ObserverGain obs = observer_gain(model.A, model.C, qe, re);
  d.Sigma = obs.riccati.P;
  d.Kobs = obs.Kobs;
  d.observer_residual = obs.riccati.residual;
  d.observer_iterations = obs.riccati.iterations;
  d.Qe = qe;
  d.Re = re;
  d.regulator_spectral_radius = linalg::spectral_radius(model.A - model.B * d.Kopt);
  d.observer_spectral_radius = linalg::spectral_radius(model.A - d.Kobs * model.C);
  if (!d.stable()) throw NumericalError("design_lqg: closed-loop design is not Schur-stable");
  d.Nr = reference_feedforward(model, d.Kopt);
  return d;
}

}  // namespace softpos::lqg
