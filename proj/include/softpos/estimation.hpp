#pragma once

// Constant-velocity Kalman filter for a scalar depth sensor. One filter runs
// per sensor site and produces the local track consumed by fusion.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softpos/errors.hpp"

namespace softpos::estimation {

/// Nominal camera frame interval (15 Hz).
inline constexpr double kFrameInterval = 1.0 / 15.0;
/// Process acceleration standard deviation, mm/s².
inline constexpr double kDefaultSigmaA = 5.0;
/// Filter-side measurement variances, mm².
inline constexpr double kXboxMeasurementVariance = 70.0;
inline constexpr double kV2MeasurementVariance = 60.0;

/// Head distance estimate x = [d, ḋ]ᵀ at step k / wall time t.
struct KinematicState {
  double position = 0.0;  // mm
  double velocity = 0.0;  // mm/s
  std::int64_t step = 0;
  double time = 0.0;  // s

  Eigen::Vector2d vector() const { return {position, velocity}; }

  bool finite() const { return std::isfinite(position) && std::isfinite(velocity); }

  friend bool operator==(const KinematicState&, const KinematicState&) = default;
};

/// Symmetric 2×2 covariance, upper triangle stored.
struct Covariance2 {
  double p11 = 0.0;  // mm²
  double p12 = 0.0;  // mm²/s
  double p22 = 0.0;  // mm²/s²

  static Covariance2 from_matrix(const Eigen::Matrix2d& m) {
    return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)};
  }

  Eigen::Matrix2d matrix() const {
    Eigen::Matrix2d m;
    m << p11, p12, p12, p22;
    return m;
  }

  double trace() const { return p11 + p22; }
  double determinant() const { return p11 * p22 - p12 * p12; }
  double scale() const { return std::max({std::abs(p11), std::abs(p12), std::abs(p22), 1e-300}); }

  bool finite() const { return std::isfinite(p11) && std::isfinite(p12) && std::isfinite(p22); }

  bool is_psd(double rel_eps = 1e-9) const {
    const double s = scale();
    return p11 >= -rel_eps * s && p22 >= -rel_eps * s && determinant() >= -rel_eps * s * s;
  }

  bool invertible() const { return determinant() > 0.0 && p11 > 0.0; }

  friend bool operator==(const Covariance2&, const Covariance2&) = default;
};

struct ProcessModel {
  double dt = kFrameInterval;      // s
  double sigma_a = kDefaultSigmaA;  // mm/s²

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("process model: dt must be > 0");
    if (!(sigma_a >= 0.0) || !std::isfinite(sigma_a)) {
      throw InvalidInput("process model: sigma_a must be >= 0");
    }
  }
};

struct MeasurementModel {
  double r = kXboxMeasurementVariance;  // mm²
  std::uint32_t sensor_id = 0;

  void validate() const {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw InvalidInput("measurement model: r must be > 0 (sensor " + std::to_string(sensor_id) + ")");
    }
  }
};

/// F = [[1, ΔT], [0, 1]].
inline Eigen::Matrix2d transition_matrix(const ProcessModel& model) {
  Eigen::Matrix2d f;
  f << 1.0, model.dt, 0.0, 1.0;
  return f;
}

/// Q = W Wᵀ σ_a² with W = [ΔT²/2, ΔT]ᵀ. Rank one.
inline Covariance2 process_noise(const ProcessModel& model) {
  const double dt = model.dt;
  const double s2 = model.sigma_a * model.sigma_a;
  const double w1 = 0.5 * dt * dt;
  const double w2 = dt;
  return {w1 * w1 * s2, w1 * w2 * s2, w2 * w2 * s2};
}

struct Estimate {
  KinematicState state;
  Covariance2 cov;
};

/// Time update with no control input.
inline Estimate predict(const KinematicState& state, const Covariance2& cov, const ProcessModel& model) {
  const double dt = model.dt;
  const Covariance2 q = process_noise(model);
  Estimate out;
  out.state = state;
  out.state.position = state.position + dt * state.velocity;
  out.state.step = state.step + 1;
  out.state.time = state.time + dt;
  out.cov.p11 = cov.p11 + 2.0 * dt * cov.p12 + dt * dt * cov.p22 + q.p11;
  out.cov.p12 = cov.p12 + dt * cov.p22 + q.p12;
  out.cov.p22 = cov.p22 + q.p22;
  return out;
}

struct UpdateResult {
  KinematicState state;
  Covariance2 cov;
  double innovation = 0.0;           // z − Hx⁻, mm
  double innovation_variance = 0.0;  // HP⁻Hᵀ + r, mm²
  Eigen::Vector2d gain = Eigen::Vector2d::Zero();
};

/// Measurement update with H = [1 0]. Returns nullopt for a non-finite
/// sample, which the caller treats as a dropped frame.
inline std::optional<UpdateResult> update(const KinematicState& state, const Covariance2& cov, double z,
                                          const MeasurementModel& meas) {
  if (!std::isfinite(z)) return std::nullopt;
  meas.validate();
  const double s = cov.p11 + meas.r;
  const double k1 = cov.p11 / s;
  const double k2 = cov.p12 / s;
  const double innovation = z - state.position;

  UpdateResult out;
  out.state = state;
  out.state.position = state.position + k1 * innovation;
  out.state.velocity = state.velocity + k2 * innovation;
  out.cov.p11 = cov.p11 - k1 * cov.p11;
  out.cov.p12 = cov.p12 - k1 * cov.p12;
  out.cov.p22 = cov.p22 - k2 * cov.p12;
  out.innovation = innovation;
  out.innovation_variance = s;
  out.gain = {k1, k2};
  return out;
}

/// x0 = [z0, 0], P0 = diag(r, (2 σ_a ΔT)²).
inline Estimate initial_estimate(double z0, double t0, const ProcessModel& process, const MeasurementModel& meas) {
  const double sv = 2.0 * process.sigma_a * process.dt;
  return {{z0, 0.0, 0, t0}, {meas.r, 0.0, sv * sv}};
}

struct FilterStep {
  KinematicState state;
  Covariance2 cov;
  std::optional<double> innovation;  // empty for dropped frames
};

/// Alternating predict/update over a uniformly sampled sequence. Non-finite
/// samples become prediction-only steps. The first entry is the update of x0
/// with z[0] (no prediction before it).
inline std::vector<FilterStep> filter_sequence(std::span<const double> z, const ProcessModel& process,
                                               const MeasurementModel& meas, const KinematicState& x0,
                                               const Covariance2& p0) {
  if (z.empty()) throw InvalidInput("filter_sequence: at least one measurement required");
  process.validate();
  meas.validate();
  std::vector<FilterStep> out;
  out.reserve(z.size());
  Estimate current{x0, p0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i > 0) current = predict(current.state, current.cov, process);
    FilterStep step{current.state, current.cov, std::nullopt};
    if (auto upd = update(current.state, current.cov, z[i], meas)) {
      current = {upd->state, upd->cov};
      step = {upd->state, upd->cov, upd->innovation};
    }
    out.push_back(step);
  }
  return out;
}

/// Streaming form of filter_sequence for one sensor site. Initializes from
/// the first finite sample; later calls predict to the sample time and update.
class LocalFilter {
 public:
  LocalFilter(double sigma_a, MeasurementModel meas) : sigma_a_(sigma_a), meas_(meas) {
    ProcessModel{kFrameInterval, sigma_a}.validate();
    meas_.validate();
  }

  bool initialized() const { return estimate_.has_value(); }
  const std::optional<Estimate>& estimate() const { return estimate_; }
  const MeasurementModel& measurement_model() const { return meas_; }
  double sigma_a() const { return sigma_a_; }

  /// Processes a sample taken at time t (s). Returns the innovation, or
  /// nullopt if the sample was dropped or used for initialization.
  std::optional<double> step(double t, double z, double nominal_dt = kFrameInterval) {
    if (!estimate_) {
      if (!std::isfinite(z)) return std::nullopt;
      estimate_ = initial_estimate(z, t, {nominal_dt, sigma_a_}, meas_);
      return std::nullopt;
    }
    const double dt = t - estimate_->state.time;
    if (dt < 0.0) throw InvalidInput("LocalFilter: sample time moved backwards");
    Estimate prior = estimate_.value();
    if (dt > 0.0) {
      prior = predict(prior.state, prior.cov, {dt, sigma_a_});
      prior.state.time = t;
    }
    auto upd = update(prior.state, prior.cov, z, meas_);
    if (!upd) {
      estimate_ = prior;
      return std::nullopt;
    }
    estimate_ = Estimate{upd->state, upd->cov};
    return upd->innovation;
  }

 private:
  double sigma_a_;
  MeasurementModel meas_;
  std::optional<Estimate> estimate_;
};

}  // namespace softpos::estimation
