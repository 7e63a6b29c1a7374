#pragma once

// Uniform white excitation: levels drawn uniformly on [−A, A] and held for
// `hold` samples, which band-limits the signal to the valve bandwidth. The
// ideal full-band statistics are μ = 0, σ = A/√3, crest factor √3.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/random.hpp"

namespace softpos::sysid {

struct InputSignalSpec {
  double amplitude = 1.0;  // drive units
  std::size_t length = 1;
  std::uint64_t seed = 0;
  std::size_t hold = 1;  // samples per level

  void validate() const {
    if (!(amplitude > 0.0) || !std::isfinite(amplitude)) throw InvalidInput("input design: amplitude must be > 0");
    if (length < 1) throw InvalidInput("input design: length must be >= 1");
    if (hold < 1) throw InvalidInput("input design: hold must be >= 1");
  }
};

struct ExcitationSignal {
  std::vector<double> samples;
  double mean = 0.0;
  double stddev = 0.0;
  double crest_factor = 0.0;  // peak / rms
};

inline ExcitationSignal design_input(const InputSignalSpec& spec) {
  spec.validate();
  RandomStream rng(spec.seed);
  ExcitationSignal sig;
  sig.samples.resize(spec.length);
  double level = 0.0;
  for (std::size_t i = 0; i < spec.length; ++i) {
    if (i % spec.hold == 0) level = rng.uniform(-spec.amplitude, spec.amplitude);
    sig.samples[i] = level;
  }
  double sum = 0.0;
  double sum2 = 0.0;
  double peak = 0.0;
  for (const double v : sig.samples) {
    sum += v;
    sum2 += v * v;
    peak = std::max(peak, std::abs(v));
  }
  const auto n = static_cast<double>(spec.length);
  sig.mean = sum / n;
  sig.stddev = std::sqrt(std::max(0.0, sum2 / n - sig.mean * sig.mean));
  const double rms = std::sqrt(sum2 / n);
  sig.crest_factor = rms > 0.0 ? peak / rms : 0.0;
  return sig;
}

}  // namespace softpos::sysid
