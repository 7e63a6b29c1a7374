#pragma once

// The five experiment stages behind the command-line runner. Each stage reads
// its inputs from files, writes its outputs into an output directory and
// returns a short human-readable summary. All randomness derives from
// config.seed, so repeated runs produce byte-identical files.
//
//   simulate    → sensors.csv, id_data.csv
//   fuse        → local_tracks.csv, fused.csv, fuse_summary.json
//   identify    → model.json, order_sweep.csv, identify_report.txt
//   design      → design.json
//   closedloop  → trace.csv, metrics.json

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "softpos/closed_loop.hpp"
#include "softpos/errors.hpp"
#include "softpos/estimation.hpp"
#include "softpos/fusion.hpp"
#include "softpos/fusion_site.hpp"
#include "softpos/io/config.hpp"
#include "softpos/io/csv.hpp"
#include "softpos/io/model_json.hpp"
#include "softpos/lqg.hpp"
#include "softpos/plant_data.hpp"
#include "softpos/random.hpp"
#include "softpos/sensors.hpp"
#include "softpos/state_space.hpp"
#include "softpos/sysid/order_sweep.hpp"
#include "softpos/track_frame.hpp"

namespace softpos::cli {

namespace fs = std::filesystem;
using io::Json;

inline constexpr const char* kSensorsFile = "sensors.csv";
inline constexpr const char* kIdDataFile = "id_data.csv";
inline constexpr const char* kLocalTracksFile = "local_tracks.csv";
inline constexpr const char* kFusedFile = "fused.csv";
inline constexpr const char* kFuseSummaryFile = "fuse_summary.json";
inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kSweepCsvFile = "order_sweep.csv";
inline constexpr const char* kReportFile = "identify_report.txt";
inline constexpr const char* kDesignFile = "design.json";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kMetricsFile = "metrics.json";

struct CommandResult {
  std::vector<fs::path> files;
  std::string summary;
};

namespace detail {

inline fs::path prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw InvalidInput("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // population
  std::size_t count = 0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  m.count = v.size();
  if (v.empty()) return m;
  for (const double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (const double x : v) m.variance += (x - m.mean) * (x - m.mean);
  m.variance /= static_cast<double>(v.size());
  return m;
}

/// Linear interpolation of (t, v) at time x; clamps outside the range.
inline double interpolate(const std::vector<double>& t, const std::vector<double>& v, double x) {
  if (x <= t.front()) return v.front();
  if (x >= t.back()) return v.back();
  const auto it = std::upper_bound(t.begin(), t.end(), x);
  const auto i = static_cast<std::size_t>(it - t.begin());
  const double w = (x - t[i - 1]) / (t[i] - t[i - 1]);
  return v[i - 1] + w * (v[i] - v[i - 1]);
}

inline const io::SensorConfig& sensor_for(const io::ExperimentConfig& cfg, const std::string& name) {
  if (name == "xbox") return cfg.xbox;
  if (name == "v2") return cfg.v2;
  throw InvalidInput("unknown sensor column 'z_" + name + "' (expected z_xbox and/or z_v2)");
}

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

/// Truth trajectory plus one column per simulated depth sensor, and an
/// open-loop identification record from the reference plant.
inline CommandResult cmd_simulate(const io::ExperimentConfig& cfg, const fs::path& out_dir) {
  const fs::path out = detail::prepare_out(out_dir);
  if (cfg.xbox.spec.rate != cfg.v2.spec.rate) {
    throw ConfigError("$.sensors.v2.rate", "must equal $.sensors.xbox.rate (sensors share one time column)");
  }
  const auto xbox = sensors::sample_sensor(cfg.truth, cfg.xbox.spec, cfg.horizon,
                                           derive_seed(cfg.seed, "simulate/sensor/xbox"));
  const auto v2 = sensors::sample_sensor(cfg.truth, cfg.v2.spec, cfg.horizon,
                                         derive_seed(cfg.seed, "simulate/sensor/v2"));
  io::TimeSeries s;
  std::vector<double> truth, zx, zv;
  for (std::size_t i = 0; i < xbox.size(); ++i) {
    s.t.push_back(xbox[i].time);
    truth.push_back(xbox[i].truth);
    zx.push_back(xbox[i].z);
    zv.push_back(v2[i].z);
  }
  s.add_column("truth", std::move(truth));
  s.add_column("z_xbox", std::move(zx));
  s.add_column("z_v2", std::move(zv));
  const fs::path sensors_path = out / kSensorsFile;
  io::write_csv_file(sensors_path.string(), s);

  StateSpaceModel plant = rig_plant();
  plant.Ts = cfg.sample_period;
  const std::uint64_t id_seed = derive_seed(cfg.seed, "simulate/identification");
  const double lambda =
      cfg.snr_db ? innovation_variance_for_snr(plant, cfg.excitation, *cfg.snr_db, id_seed) : cfg.innovation_variance;
  const auto ex = simulate_id_experiment(plant, cfg.excitation, lambda, id_seed, cfg.split);
  io::TimeSeries id;
  for (std::size_t k = 0; k < ex.data.size(); ++k) id.t.push_back(static_cast<double>(k) * cfg.sample_period);
  id.add_column("u", ex.data.u);
  id.add_column("y", ex.data.y);
  const fs::path id_path = out / kIdDataFile;
  io::write_csv_file(id_path.string(), id);

  std::ostringstream sum;
  sum << "simulate: " << s.rows() << " sensor rows (" << cfg.horizon << " s at " << cfg.xbox.spec.rate
      << " Hz), " << id.rows() << " identification rows (innovation variance " << lambda << ", SNR "
      << ex.snr_db() << " dB)\n";
  return {{sensors_path, id_path}, sum.str()};
}

/// Runs one local Kalman filter per z_* column, ships the local tracks as
/// framed byte streams to the fusion site and fuses at the configured rate.
/// Statistics skip the first `fusion.warmup` seconds.
inline CommandResult cmd_fuse(const fs::path& input, const io::ExperimentConfig& cfg, const fs::path& out_dir) {
  const fs::path out = detail::prepare_out(out_dir);
  const io::TimeSeries in = io::read_csv(input.string());
  if (in.rows() < 2) throw InvalidInput(input.string() + ": at least two rows required");
  const bool has_truth = in.has("truth");

  struct Channel {
    std::string name;
    const io::SensorConfig* sensor;
    std::vector<double> z;
    std::vector<double> d, v, p11, p12, p22;
    std::vector<std::uint8_t> bytes;
  };
  std::vector<Channel> channels;
  for (const auto& name : in.names) {
    if (name.rfind("z_", 0) != 0) continue;
    const std::string sname = name.substr(2);
    channels.push_back({sname, &detail::sensor_for(cfg, sname), in.column(name), {}, {}, {}, {}, {}, {}});
  }
  if (channels.empty()) throw InvalidInput(input.string() + ": no sensor columns (z_xbox, z_v2)");

  const double warmup_end = in.t.front() + cfg.fusion_warmup;
  for (auto& ch : channels) {
    estimation::LocalFilter filter(cfg.sigma_a, {ch.sensor->filter_variance, ch.sensor->spec.sensor_id});
    const double nominal_dt = 1.0 / ch.sensor->spec.rate;
    for (std::size_t i = 0; i < in.rows(); ++i) {
      filter.step(in.t[i], ch.z[i], nominal_dt);
      const auto& est = filter.estimate();
      if (!est) throw InvalidInput(input.string() + ": column z_" + ch.name + " has no finite leading sample");
      ch.d.push_back(est->state.position);
      ch.v.push_back(est->state.velocity);
      ch.p11.push_back(est->cov.p11);
      ch.p12.push_back(est->cov.p12);
      ch.p22.push_back(est->cov.p22);
      const auto frame = fusion::encode_frame(fusion::make_local_track(ch.sensor->spec.sensor_id, i, *est));
      ch.bytes.insert(ch.bytes.end(), frame.begin(), frame.end());
    }
  }

  io::TimeSeries local;
  local.t = in.t;
  for (const auto& ch : channels) {
    local.add_column("d_" + ch.name, ch.d);
    local.add_column("v_" + ch.name, ch.v);
    local.add_column("p11_" + ch.name, ch.p11);
    local.add_column("p12_" + ch.name, ch.p12);
    local.add_column("p22_" + ch.name, ch.p22);
  }
  const fs::path local_path = out / kLocalTracksFile;
  io::write_csv_file(local_path.string(), local);

  std::vector<std::span<const std::uint8_t>> streams;
  for (const auto& ch : channels) streams.emplace_back(ch.bytes);
  const fusion::FusionSiteConfig site{cfg.fusion_rate, cfg.staleness_ticks, cfg.sigma_a};
  const auto loop = fusion::fusion_loop(streams, site, in.t.front(), in.t.back());

  io::TimeSeries fused;
  std::vector<std::vector<double>> local_cols(channels.size());
  std::vector<double> fd, fv, f11, f12, f22, err;
  std::size_t incomplete = 0;
  bool dominance_ok = true;
  for (const auto& tick : loop.ticks) {
    if (!tick.fused) continue;
    if (tick.aligned.size() != channels.size()) {
      ++incomplete;
      continue;
    }
    fused.t.push_back(tick.time);
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const auto id = channels[c].sensor->spec.sensor_id;
      for (const auto& a : tick.aligned) {
        if (a.sensor_id == id) local_cols[c].push_back(a.state.position);
        if (!fusion::dominates(a.cov, tick.fused->cov)) dominance_ok = false;
      }
    }
    fd.push_back(tick.fused->state.position);
    fv.push_back(tick.fused->state.velocity);
    f11.push_back(tick.fused->cov.p11);
    f12.push_back(tick.fused->cov.p12);
    f22.push_back(tick.fused->cov.p22);
    if (tick.time >= warmup_end) {
      const double ref = has_truth ? detail::interpolate(in.t, in.column("truth"), tick.time) : 0.0;
      err.push_back(tick.fused->state.position - ref);
    }
  }
  for (std::size_t c = 0; c < channels.size(); ++c) fused.add_column("d_" + channels[c].name, local_cols[c]);
  fused.add_column("d_fused", fd);
  fused.add_column("v_fused", fv);
  fused.add_column("p11_fused", f11);
  fused.add_column("p12_fused", f12);
  fused.add_column("p22_fused", f22);
  const fs::path fused_path = out / kFusedFile;
  io::write_csv_file(fused_path.string(), fused);

  Json summary;
  summary["input"] = input.filename().string();
  summary["warmup"] = cfg.fusion_warmup;
  summary["reference"] = has_truth ? "truth" : "mean";
  summary["sigma_a"] = cfg.sigma_a;
  summary["ticks"] = loop.ticks.size();
  summary["gaps"] = loop.gaps.size();
  summary["incomplete_ticks"] = incomplete;
  summary["decode_errors"] = loop.decode_errors.size();
  std::ostringstream text;
  text << "fuse: " << channels.size() << " sensor(s), " << loop.ticks.size() << " ticks, statistics after "
       << cfg.fusion_warmup << " s warm-up\n";
  Json sensors_json = Json::object();
  for (const auto& ch : channels) {
    std::vector<double> raw, filt;
    for (std::size_t i = 0; i < in.rows(); ++i) {
      if (in.t[i] < warmup_end) continue;
      const double ref = has_truth ? in.column("truth")[i] : 0.0;
      raw.push_back(ch.z[i] - ref);
      filt.push_back(ch.d[i] - ref);
    }
    const auto mr = detail::moments(raw);
    const auto mf = detail::moments(filt);
    const std::optional<double> reduction =
        mr.variance > 0.0 ? std::optional<double>(100.0 * (1.0 - mf.variance / mr.variance)) : std::nullopt;
    sensors_json[ch.name] = {{"samples", mr.count},
                             {"raw_variance", mr.variance},
                             {"filtered_variance", mf.variance},
                             {"variance_reduction_pct", detail::optional_number(reduction)}};
    text << "  " << ch.name << ": raw variance " << mr.variance << " mm², filtered " << mf.variance
         << " mm², reduction " << (reduction ? std::to_string(*reduction) : std::string("n/a")) << " %\n";
  }
  summary["sensors"] = sensors_json;
  const auto mfz = detail::moments(err);
  summary["fused"] = {{"samples", mfz.count}, {"variance", mfz.variance}, {"std", std::sqrt(mfz.variance)},
                      {"mean_error", has_truth ? Json(mfz.mean) : Json(nullptr)}};
  summary["dominance_ok"] = dominance_ok;
  text << "  fused: std " << std::sqrt(mfz.variance) << " mm over " << mfz.count << " ticks; information dominance "
       << (dominance_ok ? "holds" : "VIOLATED") << "\n";
  const fs::path summary_path = out / kFuseSummaryFile;
  io::write_json_file(summary_path.string(), summary);
  return {{local_path, fused_path, summary_path}, text.str()};
}

/// Order sweep on (u, y) from the input CSV; writes the selected model.
inline CommandResult cmd_identify(const fs::path& input, const io::ExperimentConfig& cfg, const fs::path& out_dir) {
  const fs::path out = detail::prepare_out(out_dir);
  const io::TimeSeries in = io::read_csv(input.string());
  sysid::IdDataset ds;
  ds.u = in.column("u");
  ds.y = in.column("y");
  ds.split = cfg.split;
  ds.Ts = in.rows() >= 2 ? in.t[1] - in.t[0] : cfg.sample_period;
  ds.validate();

  const sysid::RealizationOptions opt{cfg.arx_lags, 0, cfg.pem_refine, true};
  const auto rows = sysid::order_sweep(ds, cfg.orders, opt);
  const auto table = sysid::render_sweep_table(rows);
  const fs::path csv_path = out / kSweepCsvFile;
  {
    std::ofstream f(csv_path, std::ios::binary | std::ios::trunc);
    f << sysid::render_sweep_csv(rows);
    if (!f) throw InvalidInput("cannot write " + csv_path.string());
  }
  const auto selected = sysid::select_order(rows, cfg.tie_tolerance);
  std::ostringstream report;
  report << "Model estimates (" << ds.train_size() << " training / " << ds.size() - ds.train_size()
         << " testing samples, Ts = " << ds.Ts << " s)\n\n"
         << table;
  if (!selected) {
    std::string why;
    for (const auto& r : rows) why += "\n  order " + std::to_string(r.order) + ": " + r.error;
    throw NumericalError("identify: no candidate order could be realized" + why);
  }
  report << "\nSelected order: " << *selected << " (smallest order with test FPE within "
         << cfg.tie_tolerance * 100.0 << " % of the minimum)\n";
  const fs::path report_path = out / kReportFile;
  {
    std::ofstream f(report_path, std::ios::binary | std::ios::trunc);
    f << report.str();
    if (!f) throw InvalidInput("cannot write " + report_path.string());
  }

  const auto& row = *std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.ok() && r.order == *selected; });
  Json model = io::model_to_json(*row.model);
  model["selected_order"] = *selected;
  model["train"] = {{"mse", row.train->mse}, {"fit_pct", detail::optional_number(row.train->fit_pct)},
                    {"fpe", row.train->fpe}};
  model["test"] = {{"mse", row.test->mse}, {"fit_pct", detail::optional_number(row.test->fit_pct)},
                   {"fpe", row.test->fpe}};
  Json poles = Json::array();
  const auto ev = linalg::eigenvalues(row.model->A);
  for (Eigen::Index i = 0; i < ev.size(); ++i) poles.push_back({ev(i).real(), ev(i).imag()});
  model["poles"] = poles;
  const fs::path model_path = out / kModelFile;
  io::write_json_file(model_path.string(), model);
  return {{model_path, csv_path, report_path}, report.str()};
}

inline lqg::LqWeights resolve_weights(const io::ExperimentConfig& cfg, const StateSpaceModel& model) {
  lqg::LqWeights w;
  w.Q = cfg.Q.resolve(model.states(), "$.design.Q");
  w.R = cfg.R.resolve(model.inputs(), "$.design.R");
  if (cfg.N) {
    if (cfg.N->rows() != model.states() || cfg.N->cols() != model.inputs()) {
      throw ConfigError("$.design.N", "must be " + std::to_string(model.states()) + "×" +
                                          std::to_string(model.inputs()) + " for this model");
    }
    w.N = *cfg.N;
  }
  return w;
}

/// LQG synthesis for the model in `model_path`.
inline CommandResult cmd_design(const fs::path& model_path, const io::ExperimentConfig& cfg, const fs::path& out_dir) {
  const fs::path out = detail::prepare_out(out_dir);
  const StateSpaceModel model = io::model_from_json(io::read_json_file(model_path.string()));
  const auto w = resolve_weights(cfg, model);
  const Matrix qe = cfg.Qe.resolve(model.states(), "$.design.Qe");
  const Matrix re = cfg.Re.resolve(model.outputs(), "$.design.Re");
  const auto design = lqg::design_lqg(model, w, qe, re);
  const fs::path design_path = out / kDesignFile;
  io::write_json_file(design_path.string(), io::design_to_json(design, w));
  std::ostringstream s;
  s << "design: order " << model.states() << ", rho(A - B Kopt) = " << design.regulator_spectral_radius
    << ", rho(A - Kobs C) = " << design.observer_spectral_radius << ", DARE residuals " << design.control_residual
    << " / " << design.observer_residual << "\n";
  return {{design_path}, s.str()};
}

/// Closed-loop simulation of the design against the reference plant with
/// fused noisy sensing.
inline CommandResult cmd_closedloop(const fs::path& model_path, const fs::path& design_path,
                                    const io::ExperimentConfig& cfg, const fs::path& out_dir) {
  const fs::path out = detail::prepare_out(out_dir);
  const StateSpaceModel model = io::model_from_json(io::read_json_file(model_path.string()));
  lqg::LqgDesign design = io::design_from_json(io::read_json_file(design_path.string()));
  io::check_design(model, design);
  if (!design.stable()) throw NumericalError("closedloop: design is not Schur-stable for this model");

  lqg::ClosedLoopConfig lc;
  lc.truth = rig_plant();
  lc.truth.Ts = model.Ts;
  lc.truth_innovation_variance = cfg.plant_innovation_variance;
  lc.channels = {{cfg.xbox.spec, cfg.xbox.filter_variance}, {cfg.v2.spec, cfg.v2.filter_variance}};
  if (cfg.noiseless_sensors) {
    for (auto& ch : lc.channels) ch.sensor.noise_variance = 0.0;
  }
  lc.allow_noiseless_sensors = cfg.noiseless_sensors;
  lc.sensors_warmed = cfg.sensors_warmed;
  lc.sigma_a = cfg.sigma_a;
  lc.reference = cfg.reference;
  lc.horizon = cfg.loop_horizon;
  lc.seed = derive_seed(cfg.seed, "closedloop");
  lc.u_limit = cfg.u_limit;
  const auto trace = lqg::closed_loop(model, design, lc);
  const auto m = lqg::loop_metrics(trace, cfg.band, cfg.steady_window);

  io::TimeSeries ts;
  std::vector<double> r, yt, ym, u;
  std::vector<std::vector<double>> xh(static_cast<std::size_t>(model.states()));
  for (const auto& row : trace) {
    ts.t.push_back(row.t);
    r.push_back(row.r);
    yt.push_back(row.y_true);
    ym.push_back(row.y_meas);
    u.push_back(row.u);
    for (std::size_t i = 0; i < xh.size(); ++i) xh[i].push_back(row.xhat(static_cast<Eigen::Index>(i)));
  }
  ts.add_column("r", std::move(r));
  ts.add_column("y_true", std::move(yt));
  ts.add_column("y_meas", std::move(ym));
  for (std::size_t i = 0; i < xh.size(); ++i) ts.add_column("xhat" + std::to_string(i + 1), std::move(xh[i]));
  ts.add_column("u", std::move(u));
  const fs::path trace_path = out / kTraceFile;
  io::write_csv_file(trace_path.string(), ts);

  Json metrics;
  metrics["settling_time"] = detail::optional_number(m.settling_time);
  metrics["overshoot"] = m.overshoot;
  metrics["steady_error_mean"] = m.steady_error_mean;
  metrics["steady_error_std"] = m.steady_error_std;
  metrics["steady_max_abs_error"] = m.steady_max_abs_error;
  metrics["band"] = m.band;
  metrics["steady_window"] = m.steady_window;
  metrics["within_band"] = m.steady_max_abs_error <= m.band;
  metrics["horizon"] = cfg.loop_horizon;
  const fs::path metrics_path = out / kMetricsFile;
  io::write_json_file(metrics_path.string(), metrics);

  std::ostringstream s;
  s << "closedloop: settling time "
    << (m.settling_time ? std::to_string(*m.settling_time) + " s" : std::string("not reached"))
    << ", overshoot " << m.overshoot << " mm, steady-state error " << m.steady_error_mean << " ± "
    << m.steady_error_std << " mm (max |e| " << m.steady_max_abs_error << " mm)\n";
  return {{trace_path, metrics_path}, s.str()};
}

}  // namespace softpos::cli
