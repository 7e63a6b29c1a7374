#pragma once

// Closed-loop head-height regulation in simulation: plant → depth sensors →
// local Kalman filters → track fusion → LQG observer/regulator → plant.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "softpos/estimation.hpp"
#include "softpos/fusion_site.hpp"
#include "softpos/lqg.hpp"
#include "softpos/random.hpp"
#include "softpos/sensors.hpp"
#include "softpos/state_space.hpp"

namespace softpos::lqg {

struct SensorChannel {
  sensors::SensorSpec sensor;
  double filter_variance = estimation::kXboxMeasurementVariance;  // r used by the local filter
};

inline std::vector<SensorChannel> rig_sensor_channels() {
  return {{sensors::xbox_sensor(), estimation::kXboxMeasurementVariance},
          {sensors::v2_sensor(), estimation::kV2MeasurementVariance}};
}

struct ClosedLoopConfig {
  StateSpaceModel truth = rig_plant();  // simulated plant
  double truth_innovation_variance = 0.0;
  std::vector<SensorChannel> channels = rig_sensor_channels();
  bool allow_noiseless_sensors = false;
  /// Sensors start already past their warm-up transient.
  bool sensors_warmed = true;
  double sigma_a = estimation::kDefaultSigmaA;
  sensors::Trajectory reference = sensors::Trajectory::constant(10.0);
  double horizon = 180.0;  // s
  std::uint64_t seed = 1;
  std::optional<double> u_limit;  // symmetric actuator clip
};

struct TraceRow {
  double t = 0.0;
  double r = 0.0;
  double y_true = 0.0;
  double y_meas = 0.0;
  Vector xhat;
  double u = 0.0;
};

inline std::vector<TraceRow> closed_loop(const StateSpaceModel& model, const LqgDesign& design,
                                         const ClosedLoopConfig& cfg) {
  model.validate();
  cfg.truth.validate();
  if (model.inputs() != 1 || model.outputs() != 1 || cfg.truth.inputs() != 1 || cfg.truth.outputs() != 1) {
    throw InvalidInput("closed_loop: single-input single-output models required");
  }
  if (!design.stable()) throw NumericalError("closed_loop: design is not Schur-stable");
  if (cfg.channels.empty()) throw InvalidInput("closed_loop: at least one sensor channel required");
  if (!(cfg.horizon > 0.0)) throw InvalidInput("closed_loop: horizon must be > 0");
  if (!(cfg.truth_innovation_variance >= 0.0)) throw InvalidInput("closed_loop: innovation variance must be >= 0");

  const double ts = model.Ts;
  std::vector<sensors::DepthSensor> depth;
  std::vector<estimation::LocalFilter> filters;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const auto& ch = cfg.channels[i];
    depth.emplace_back(ch.sensor, derive_seed(cfg.seed, "closed_loop/sensor/" + ch.sensor.name),
                       cfg.allow_noiseless_sensors);
    filters.emplace_back(cfg.sigma_a, estimation::MeasurementModel{ch.filter_variance, ch.sensor.sensor_id});
  }
  fusion::FusionSite site({1.0 / ts, fusion::kDefaultStalenessTicks, cfg.sigma_a});
  RandomStream plant_noise(cfg.seed, "closed_loop/plant");
  const double e_sd = std::sqrt(cfg.truth_innovation_variance);

  Vector x = Vector::Zero(cfg.truth.states());
  Vector xhat = Vector::Zero(model.states());
  const auto steps = static_cast<std::size_t>(std::ceil(cfg.horizon / ts - 1e-9));
  std::vector<TraceRow> trace;
  trace.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * ts;
    const double e = e_sd > 0.0 ? e_sd * plant_noise.standard_normal() : 0.0;
    const double y_true = (cfg.truth.C * x)(0) + e;

    for (std::size_t i = 0; i < depth.size(); ++i) {
      const double sensor_clock = t + (cfg.sensors_warmed ? depth[i].spec().warmup : 0.0);
      const double z = depth[i].measure(y_true, sensor_clock);
      filters[i].step(t, z, ts);
      site.accept(fusion::make_local_track(depth[i].spec().sensor_id, k, filters[i].estimate().value()));
    }
    const auto tick = site.tick(t);
    if (!tick.fused) throw NumericalError("closed_loop: fusion produced no estimate");
    const double y_meas = tick.fused->state.position;

    const double r = sensors::evaluate_trajectory(cfg.reference, t);
    double u = -(design.Kopt * xhat)(0) + design.Nr(0, 0) * r;
    if (cfg.u_limit) u = std::clamp(u, -*cfg.u_limit, *cfg.u_limit);

    trace.push_back({t, r, y_true, y_meas, xhat, u});

    xhat = observer_step(model, design.Kobs, xhat, Vector::Constant(1, y_meas), Vector::Constant(1, u));
    x = cfg.truth.A * x + cfg.truth.B.col(0) * u + cfg.truth.K.col(0) * e;
  }
  return trace;
}

struct LoopMetrics {
  std::optional<double> settling_time;  // s; empty if the run ends outside the band
  double overshoot = 0.0;               // mm beyond the final reference
  double steady_error_mean = 0.0;       // mm, y_true − r over the steady window
  double steady_error_std = 0.0;
  double steady_max_abs_error = 0.0;
  double band = 2.0;
  double steady_window = 60.0;
};

/// Settling time is the first time after which |y_true − r| stays within the
/// band; the steady window is the final `steady_window` seconds.
inline LoopMetrics loop_metrics(const std::vector<TraceRow>& trace, double band = 2.0, double steady_window = 60.0) {
  LoopMetrics m;
  m.band = band;
  m.steady_window = steady_window;
  if (trace.empty()) return m;

  std::optional<std::size_t> last_outside;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (std::abs(trace[i].y_true - trace[i].r) > band) last_outside = i;
  }
  if (!last_outside) {
    m.settling_time = 0.0;
  } else if (*last_outside + 1 < trace.size()) {
    m.settling_time = trace[*last_outside + 1].t;
  }

  const double r_final = trace.back().r;
  const double step = r_final - trace.front().y_true;
  double over = 0.0;
  for (const auto& row : trace) {
    const double dev = row.y_true - r_final;
    over = std::max(over, step > 0.0 ? dev : step < 0.0 ? -dev : std::abs(dev));
  }
  m.overshoot = over;

  const double t_end = trace.back().t;
  double sum = 0.0;
  double sum2 = 0.0;
  std::size_t count = 0;
  for (const auto& row : trace) {
    if (row.t < t_end - steady_window) continue;
    const double err = row.y_true - row.r;
    sum += err;
    sum2 += err * err;
    m.steady_max_abs_error = std::max(m.steady_max_abs_error, std::abs(err));
    ++count;
  }
  if (count > 0) {
    m.steady_error_mean = sum / static_cast<double>(count);
    m.steady_error_std = std::sqrt(std::max(0.0, sum2 / static_cast<double>(count) - m.steady_error_mean * m.steady_error_mean));
  }
  return m;
}

}  // namespace softpos::lqg
