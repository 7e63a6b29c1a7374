#pragma once

// Experiment configuration: one JSON document holding every tunable. Every
// section and key is optional (defaults below); unknown keys are rejected and
// all values are range-checked. Errors carry a JSON path such as
// "$.sensors.xbox.noise_variance".

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "softpos/errors.hpp"
#include "softpos/estimation.hpp"
#include "softpos/fusion_site.hpp"
#include "softpos/linalg.hpp"
#include "softpos/plant_data.hpp"
#include "softpos/sensors.hpp"
#include "softpos/sysid/dataset.hpp"
#include "softpos/sysid/order_sweep.hpp"
#include "softpos/sysid/realization.hpp"

namespace softpos::io {

using Json = nlohmann::json;

/// A weight given either as a scalar s (meaning s·I of whatever size the
/// model needs) or as an explicit matrix.
struct WeightSpec {
  std::optional<double> scale;
  Matrix matrix;

  static WeightSpec scalar(double s) { return {s, Matrix()}; }
  Matrix resolve(Eigen::Index n, const std::string& path) const {
    if (scale) return *scale * Matrix::Identity(n, n);
    if (matrix.rows() != n || matrix.cols() != n) {
      throw ConfigError(path, "matrix must be " + std::to_string(n) + "×" + std::to_string(n) + " for this model");
    }
    return matrix;
  }
};

struct SensorConfig {
  sensors::SensorSpec spec;
  double filter_variance = 0.0;  // r used by the local Kalman filter
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  double sample_period = estimation::kFrameInterval;

  SensorConfig xbox{sensors::xbox_sensor(), estimation::kXboxMeasurementVariance};
  SensorConfig v2{sensors::v2_sensor(), estimation::kV2MeasurementVariance};

  double sigma_a = estimation::kDefaultSigmaA;

  double fusion_rate = fusion::kDefaultFusionRate;
  int staleness_ticks = fusion::kDefaultStalenessTicks;
  double fusion_warmup = sensors::kDefaultWarmup;  // s discarded before statistics

  // simulate
  double horizon = 600.0;  // s
  sensors::Trajectory truth = sensors::Trajectory::constant(120.0);
  sysid::InputSignalSpec excitation{kDefaultExcitationAmplitude, kDefaultIdLength, 0, kDefaultExcitationHold};
  double innovation_variance = kDefaultInnovationVariance;
  std::optional<double> snr_db;  // overrides innovation_variance when set

  // identify
  double split = sysid::kDefaultSplit;
  std::vector<std::size_t> orders{2, 4, 6, 8};
  std::size_t arx_lags = sysid::kDefaultArxLags;
  bool pem_refine = false;
  double tie_tolerance = sysid::kOrderTieTolerance;

  // design
  WeightSpec Q = WeightSpec::scalar(1.0566);
  WeightSpec R{std::nullopt, Matrix::Constant(1, 1, 0.058006)};
  std::optional<Matrix> N;
  WeightSpec Qe = WeightSpec::scalar(0.4511);
  WeightSpec Re{std::nullopt, Matrix::Constant(1, 1, 0.01)};

  // closedloop
  double loop_horizon = 180.0;
  sensors::Trajectory reference = sensors::Trajectory::constant(10.0);
  std::optional<double> u_limit;
  double plant_innovation_variance = 0.0;
  bool sensors_warmed = true;
  bool noiseless_sensors = false;  // test stimulus: zero sensor noise
  double band = 2.0;
  double steady_window = 60.0;
};

namespace config_detail {

/// Walks one JSON object, remembering which keys were consumed so leftovers
/// can be reported.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }
  ~Section() = default;
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  const std::string& path() const { return path_; }
  std::string key_path(const std::string& key) const { return path_ + "." + key; }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const Json* v = get(key)) {
      if (!v->is_number()) throw ConfigError(key_path(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(key_path(key), "must be finite");
    }
  }
  void optional_number(const std::string& key, std::optional<double>& out) {
    if (const Json* v = get(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      double x = 0.0;
      number(key, x);
      out = x;
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const Json* v = get(key)) {
      if (!v->is_boolean()) throw ConfigError(key_path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const Json* v = get(key)) {
      if (!v->is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (!v->is_number_unsigned()) throw ConfigError(key_path(key), "must be >= 0");
        out = static_cast<Int>(v->get<std::uint64_t>());
      } else {
        out = static_cast<Int>(v->get<std::int64_t>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

inline Matrix parse_matrix(const Json& j, const std::string& path) {
  require(j.is_array() && !j.empty(), path, "expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = -1;
  Matrix m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    const std::string rp = path + "[" + std::to_string(i) + "]";
    require(row.is_array() && !row.empty(), rp, "expected a non-empty array of numbers");
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      m.resize(rows, cols);
    }
    require(static_cast<Eigen::Index>(row.size()) == cols, rp, "rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      const std::string cp = rp + "[" + std::to_string(c) + "]";
      require(v.is_number(), cp, "expected a number");
      m(i, c) = v.get<double>();
      require(std::isfinite(m(i, c)), cp, "must be finite");
    }
  }
  return m;
}

/// Scalar → s·I, array → explicit matrix. `pd` demands positive definiteness,
/// otherwise positive semi-definiteness.
inline void weight(Section& s, const std::string& key, WeightSpec& out, bool pd) {
  const Json* v = s.get(key);
  if (!v) return;
  const std::string path = s.key_path(key);
  if (v->is_number()) {
    const double x = v->get<double>();
    require(std::isfinite(x) && (pd ? x > 0.0 : x >= 0.0), path, pd ? "must be > 0" : "must be >= 0");
    out = WeightSpec::scalar(x);
    return;
  }
  Matrix m = parse_matrix(*v, path);
  require(m.rows() == m.cols(), path, "must be square");
  require(linalg::is_symmetric(m), path, "must be symmetric");
  if (pd) {
    require(Eigen::LLT<Matrix>(m).info() == Eigen::Success, path, "must be positive definite");
  } else {
    require(linalg::is_psd(m), path, "must be positive semi-definite");
  }
  out = {std::nullopt, m};
}

inline sensors::TrajectoryKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "constant") return sensors::TrajectoryKind::kConstant;
  if (s == "step") return sensors::TrajectoryKind::kStep;
  if (s == "ramp") return sensors::TrajectoryKind::kRamp;
  if (s == "sinusoid") return sensors::TrajectoryKind::kSinusoid;
  if (s == "head_raise") return sensors::TrajectoryKind::kHeadRaise;
  throw ConfigError(path, "unknown trajectory kind '" + s + "' (constant|step|ramp|sinusoid|head_raise)");
}

inline void trajectory(Section& parent, const std::string& key, sensors::Trajectory& out) {
  const Json* v = parent.get(key);
  if (!v) return;
  Section s(*v, parent.key_path(key));
  if (const Json* k = s.get("kind")) {
    require(k->is_string(), s.key_path("kind"), "expected a string");
    out.kind = parse_kind(k->get<std::string>(), s.key_path("kind"));
  }
  s.number("level", out.level);
  s.number("amplitude", out.amplitude);
  s.number("slope", out.slope);
  s.number("period", out.period);
  s.number("start", out.start);
  s.number("duration", out.duration);
  s.finish();
  require(out.kind != sensors::TrajectoryKind::kSinusoid || out.period > 0.0, s.key_path("period"), "must be > 0");
  require(out.kind != sensors::TrajectoryKind::kHeadRaise || out.duration > 0.0, s.key_path("duration"),
          "must be > 0");
  require(out.start >= 0.0, s.key_path("start"), "must be >= 0");
}

inline void sensor(Section& parent, const std::string& key, SensorConfig& out) {
  const Json* v = parent.get(key);
  if (!v) return;
  Section s(*v, parent.key_path(key));
  s.number("noise_variance", out.spec.noise_variance);
  s.number("rate", out.spec.rate);
  s.number("warmup", out.spec.warmup);
  s.number("warmup_scale", out.spec.warmup_scale);
  s.number("filter_variance", out.filter_variance);
  s.finish();
  require(out.spec.noise_variance > 0.0, s.key_path("noise_variance"), "must be > 0");
  require(out.spec.rate > 0.0, s.key_path("rate"), "must be > 0");
  require(out.spec.warmup >= 0.0, s.key_path("warmup"), "must be >= 0");
  require(out.spec.warmup_scale >= 1.0, s.key_path("warmup_scale"), "must be >= 1");
  require(out.filter_variance > 0.0, s.key_path("filter_variance"), "must be > 0");
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const Json& doc) {
  using namespace config_detail;
  ExperimentConfig c;
  Section root(doc, "$");
  root.integer("seed", c.seed);
  root.number("sample_period", c.sample_period);
  require(c.sample_period > 0.0, "$.sample_period", "must be > 0");

  if (const Json* v = root.get("sensors")) {
    Section s(*v, "$.sensors");
    sensor(s, "xbox", c.xbox);
    sensor(s, "v2", c.v2);
    s.finish();
  }
  if (const Json* v = root.get("estimation")) {
    Section s(*v, "$.estimation");
    s.number("sigma_a", c.sigma_a);
    s.finish();
    require(c.sigma_a >= 0.0, "$.estimation.sigma_a", "must be >= 0");
  }
  if (const Json* v = root.get("fusion")) {
    Section s(*v, "$.fusion");
    s.number("rate", c.fusion_rate);
    s.integer("staleness_ticks", c.staleness_ticks);
    s.number("warmup", c.fusion_warmup);
    s.finish();
    require(c.fusion_rate > 0.0, "$.fusion.rate", "must be > 0");
    require(c.staleness_ticks >= 1, "$.fusion.staleness_ticks", "must be >= 1");
    require(c.fusion_warmup >= 0.0, "$.fusion.warmup", "must be >= 0");
  }
  if (const Json* v = root.get("simulate")) {
    Section s(*v, "$.simulate");
    s.number("horizon", c.horizon);
    require(c.horizon > 0.0, "$.simulate.horizon", "must be > 0");
    trajectory(s, "truth", c.truth);
    if (const Json* e = s.get("excitation")) {
      Section x(*e, "$.simulate.excitation");
      x.number("amplitude", c.excitation.amplitude);
      x.integer("length", c.excitation.length);
      x.integer("hold", c.excitation.hold);
      x.finish();
      require(c.excitation.amplitude > 0.0, "$.simulate.excitation.amplitude", "must be > 0");
      require(c.excitation.length >= 10, "$.simulate.excitation.length", "must be >= 10");
      require(c.excitation.hold >= 1, "$.simulate.excitation.hold", "must be >= 1");
    }
    s.number("innovation_variance", c.innovation_variance);
    require(c.innovation_variance >= 0.0, "$.simulate.innovation_variance", "must be >= 0");
    s.optional_number("snr_db", c.snr_db);
    s.finish();
  }
  if (const Json* v = root.get("identification")) {
    Section s(*v, "$.identification");
    s.number("split", c.split);
    require(c.split > 0.0 && c.split < 1.0, "$.identification.split", "must lie in (0, 1)");
    if (const Json* o = s.get("orders")) {
      require(o->is_array() && !o->empty(), "$.identification.orders", "expected a non-empty array");
      c.orders.clear();
      for (std::size_t i = 0; i < o->size(); ++i) {
        const auto& e = (*o)[i];
        const std::string p = "$.identification.orders[" + std::to_string(i) + "]";
        require(e.is_number_unsigned() && e.get<std::uint64_t>() >= 1 && e.get<std::uint64_t>() <= 50, p,
                "must be an integer in [1, 50]");
        c.orders.push_back(e.get<std::size_t>());
      }
    }
    s.integer("arx_lags", c.arx_lags);
    require(c.arx_lags >= 1, "$.identification.arx_lags", "must be >= 1");
    s.boolean("pem_refine", c.pem_refine);
    s.number("tie_tolerance", c.tie_tolerance);
    require(c.tie_tolerance >= 0.0, "$.identification.tie_tolerance", "must be >= 0");
    s.finish();
  }
  if (const Json* v = root.get("design")) {
    Section s(*v, "$.design");
    weight(s, "Q", c.Q, false);
    weight(s, "R", c.R, true);
    if (const Json* n = s.get("N")) {
      if (!n->is_null()) c.N = parse_matrix(*n, "$.design.N");
    }
    weight(s, "Qe", c.Qe, false);
    weight(s, "Re", c.Re, true);
    s.finish();
  }
  if (const Json* v = root.get("closedloop")) {
    Section s(*v, "$.closedloop");
    s.number("horizon", c.loop_horizon);
    require(c.loop_horizon > 0.0, "$.closedloop.horizon", "must be > 0");
    trajectory(s, "reference", c.reference);
    s.optional_number("u_limit", c.u_limit);
    require(!c.u_limit || *c.u_limit > 0.0, "$.closedloop.u_limit", "must be > 0");
    s.number("plant_innovation_variance", c.plant_innovation_variance);
    require(c.plant_innovation_variance >= 0.0, "$.closedloop.plant_innovation_variance", "must be >= 0");
    s.boolean("sensors_warmed", c.sensors_warmed);
    s.boolean("noiseless_sensors", c.noiseless_sensors);
    s.number("band", c.band);
    require(c.band > 0.0, "$.closedloop.band", "must be > 0");
    s.number("steady_window", c.steady_window);
    require(c.steady_window > 0.0, "$.closedloop.steady_window", "must be > 0");
    s.finish();
  }
  root.finish();
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("$", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("$", "cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace softpos::io
