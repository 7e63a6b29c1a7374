#pragma once

// Ground-truth head trajectories and synthetic depth sensors with white
// Gaussian noise at the measured Kinect noise floors.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/random.hpp"

namespace softpos::sensors {

/// Measured noise auto-covariance, mm².
inline constexpr double kXboxNoiseVariance = 22.7057;
inline constexpr double kV2NoiseVariance = 11.4707;
/// Pixel-settling transient after sensor start-up.
inline constexpr double kDefaultWarmup = 30.0;  // s
inline constexpr double kDefaultWarmupScale = 4.0;

enum class TrajectoryKind { kConstant, kStep, kRamp, kSinusoid, kHeadRaise };

/// Head position versus time. Fields are interpreted per kind:
///   constant:   level
///   step:       level before, level + amplitude from `start` on (right-continuous)
///   ramp:       level + slope·(t − start) for t ≥ start, level before
///   sinusoid:   level + amplitude·sin(2π t / period)
///   head-raise: level, rising by amplitude over [start, start + duration]
///               along a raised-cosine profile
struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::kConstant;
  double level = 0.0;      // mm
  double amplitude = 0.0;  // mm
  double slope = 0.0;      // mm/s
  double period = 1.0;     // s
  double start = 0.0;      // s
  double duration = 1.0;   // s

  static Trajectory constant(double level) { return {TrajectoryKind::kConstant, level}; }
  static Trajectory step(double before, double after, double at) {
    return {TrajectoryKind::kStep, before, after - before, 0.0, 1.0, at};
  }
  static Trajectory ramp(double level, double slope, double start = 0.0) {
    return {TrajectoryKind::kRamp, level, 0.0, slope, 1.0, start};
  }
  static Trajectory sinusoid(double level, double amplitude, double period) {
    return {TrajectoryKind::kSinusoid, level, amplitude, 0.0, period};
  }
  static Trajectory head_raise(double level, double rise, double start, double duration) {
    return {TrajectoryKind::kHeadRaise, level, rise, 0.0, 1.0, start, duration};
  }

  void validate() const {
    if (kind == TrajectoryKind::kSinusoid && !(period > 0.0)) throw InvalidInput("trajectory: period must be > 0");
    if (kind == TrajectoryKind::kHeadRaise && !(duration > 0.0)) {
      throw InvalidInput("trajectory: duration must be > 0");
    }
  }
};

inline double evaluate_trajectory(const Trajectory& traj, double t) {
  switch (traj.kind) {
    case TrajectoryKind::kConstant:
      return traj.level;
    case TrajectoryKind::kStep:
      return t >= traj.start ? traj.level + traj.amplitude : traj.level;
    case TrajectoryKind::kRamp:
      return t >= traj.start ? traj.level + traj.slope * (t - traj.start) : traj.level;
    case TrajectoryKind::kSinusoid:
      return traj.level + traj.amplitude * std::sin(2.0 * std::numbers::pi * t / traj.period);
    case TrajectoryKind::kHeadRaise: {
      if (t <= traj.start) return traj.level;
      if (t >= traj.start + traj.duration) return traj.level + traj.amplitude;
      const double phase = (t - traj.start) / traj.duration;
      return traj.level + traj.amplitude * 0.5 * (1.0 - std::cos(std::numbers::pi * phase));
    }
  }
  return traj.level;
}

struct SensorSpec {
  std::string name = "sensor";
  std::uint32_t sensor_id = 0;
  double noise_variance = kXboxNoiseVariance;  // mm²
  double rate = 15.0;                          // Hz
  double warmup = kDefaultWarmup;              // s
  double warmup_scale = kDefaultWarmupScale;   // variance multiplier during warm-up

  /// `allow_noiseless` admits noise_variance = 0 (test stimulus only).
  void validate(bool allow_noiseless = false) const {
    const bool ok_var = allow_noiseless ? noise_variance >= 0.0 : noise_variance > 0.0;
    if (!ok_var || !std::isfinite(noise_variance)) {
      throw InvalidInput("sensor " + name + ": noise_variance must be > 0");
    }
    if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidInput("sensor " + name + ": rate must be > 0");
    if (!(warmup >= 0.0)) throw InvalidInput("sensor " + name + ": warmup must be >= 0");
    if (!(warmup_scale >= 1.0)) throw InvalidInput("sensor " + name + ": warmup_scale must be >= 1");
  }

  double variance_at(double t_since_start) const {
    return t_since_start < warmup ? noise_variance * warmup_scale : noise_variance;
  }
};

inline SensorSpec xbox_sensor() { return {"xbox", 1, kXboxNoiseVariance}; }
inline SensorSpec v2_sensor() { return {"v2", 2, kV2NoiseVariance}; }

/// Streaming depth sensor: one Gaussian draw per sample, in time order.
class DepthSensor {
 public:
  DepthSensor(SensorSpec spec, std::uint64_t seed, bool allow_noiseless = false)
      : spec_(std::move(spec)), rng_(seed) {
    spec_.validate(allow_noiseless);
  }

  double measure(double truth, double t_since_start) {
    const double sd = std::sqrt(spec_.variance_at(t_since_start));
    return truth + sd * rng_.standard_normal();
  }

  const SensorSpec& spec() const { return spec_; }

 private:
  SensorSpec spec_;
  RandomStream rng_;
};

struct Sample {
  double time = 0.0;
  double truth = 0.0;
  double z = 0.0;
};

/// Samples at t_i = i / rate for t_i < horizon.
inline std::vector<Sample> sample_sensor(const Trajectory& truth, const SensorSpec& spec, double horizon,
                                         std::uint64_t seed, bool allow_noiseless = false) {
  if (!(horizon > 0.0)) throw InvalidInput("sample_sensor: horizon must be > 0");
  truth.validate();
  DepthSensor sensor(spec, seed, allow_noiseless);
  const auto count = static_cast<std::size_t>(std::ceil(horizon * spec.rate - 1e-9));
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / spec.rate;
    const double x = evaluate_trajectory(truth, t);
    out.push_back({t, x, sensor.measure(x, t)});
  }
  return out;
}

}  // namespace softpos::sensors
