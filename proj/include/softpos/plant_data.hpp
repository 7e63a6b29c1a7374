#pragma once

// Open-loop identification experiment on a simulated plant: held uniform
// excitation in, innovations-model output out.

#include <cmath>
#include <cstdint>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/random.hpp"
#include "softpos/state_space.hpp"
#include "softpos/sysid/dataset.hpp"
#include "softpos/sysid/input_design.hpp"

namespace softpos {

/// Innovation variance that, with the default excitation below, puts the
/// one-step prediction MSE at the scale of the reference order-2 fit.
inline constexpr double kDefaultInnovationVariance = 1.4e-3;  // mm²
inline constexpr double kDefaultExcitationAmplitude = 1.75e5;  // drive units
inline constexpr std::size_t kDefaultExcitationHold = 15;      // samples
inline constexpr std::size_t kDefaultIdLength = 10000;

struct IdExperiment {
  sysid::IdDataset data;
  std::vector<double> y_clean;  // deterministic (input-driven) part
  std::vector<double> e;        // innovation sequence
  /// 10·log10(var(y_clean) / var(y − y_clean)).
  double snr_db() const {
    auto var = [](const std::vector<double>& v) {
      double m = 0.0;
      for (const double x : v) m += x;
      m /= static_cast<double>(v.size());
      double s = 0.0;
      for (const double x : v) s += (x - m) * (x - m);
      return s / static_cast<double>(v.size());
    };
    std::vector<double> noise(y_clean.size());
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = data.y[i] - y_clean[i];
    return 10.0 * std::log10(var(y_clean) / var(noise));
  }
};

/// Streams "id/input" and "id/innovation" are derived from `seed`.
inline IdExperiment simulate_id_experiment(const StateSpaceModel& plant, const sysid::InputSignalSpec& input,
                                           double innovation_variance, std::uint64_t seed, double split = 0.6) {
  if (!(innovation_variance >= 0.0) || !std::isfinite(innovation_variance)) {
    throw InvalidInput("identification experiment: innovation variance must be >= 0");
  }
  sysid::InputSignalSpec spec = input;
  spec.seed = derive_seed(seed, "id/input");
  const auto u = sysid::design_input(spec).samples;
  RandomStream rng(seed, "id/innovation");
  const double sd = std::sqrt(innovation_variance);
  std::vector<double> e(u.size());
  for (auto& v : e) v = sd > 0.0 ? sd * rng.standard_normal() : 0.0;
  const std::vector<double> zeros(u.size(), 0.0);

  IdExperiment ex;
  ex.data.u = u;
  ex.data.y = simulate_lti(plant, u, e);
  ex.data.Ts = plant.Ts;
  ex.data.split = split;
  ex.y_clean = simulate_lti(plant, u, zeros);
  ex.e = std::move(e);
  return ex;
}

/// Innovation variance that makes simulate_id_experiment(plant, input, ·,
/// seed) hit the requested output SNR exactly. The innovation stream is
/// scaled, not redrawn, so the SNR is exact for that seed.
inline double innovation_variance_for_snr(const StateSpaceModel& plant, const sysid::InputSignalSpec& input,
                                          double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) throw InvalidInput("identification experiment: snr_db must be finite");
  const auto unit = simulate_id_experiment(plant, input, 1.0, seed);
  const double unit_snr = std::pow(10.0, unit.snr_db() / 10.0);
  return unit_snr / std::pow(10.0, snr_db / 10.0);
}

}  // namespace softpos
