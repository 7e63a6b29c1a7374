#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

#include "softpos/errors.hpp"

namespace softpos::sysid {

/// Goodness of fit of a prediction sequence.
///   mse = (1/N) Σ (y − ŷ)²
///   fit = 100 (1 − ‖y − ŷ‖ / ‖y − ȳ‖)            (normalized RMSE fit, %)
///   fpe = mse (1 + d/N) / (1 − d/N)               (Akaike final prediction error)
/// `fit_pct` is empty when y is constant and ŷ ≠ y. It is stored unclamped.
struct FitReport {
  double mse = 0.0;
  std::optional<double> fit_pct;
  double fpe = 0.0;
  std::size_t params = 0;
  std::size_t samples = 0;

  double fit_display() const { return fit_pct ? std::clamp(*fit_pct, 0.0, 100.0) : 0.0; }
};

inline FitReport fit_metrics(std::span<const double> y, std::span<const double> yhat, std::size_t params) {
  if (y.size() != yhat.size()) throw InvalidInput("fit_metrics: length mismatch");
  const std::size_t n = y.size();
  if (n <= params) throw InvalidInput("fit_metrics: need more samples than parameters");
  double mean = 0.0;
  for (const double v : y) mean += v;
  mean /= static_cast<double>(n);
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - yhat[i];
    sse += r * r;
    sst += (y[i] - mean) * (y[i] - mean);
  }
  FitReport rep;
  rep.params = params;
  rep.samples = n;
  rep.mse = sse / static_cast<double>(n);
  const double ratio = static_cast<double>(params) / static_cast<double>(n);
  rep.fpe = rep.mse * (1.0 + ratio) / (1.0 - ratio);
  if (sst > 0.0) {
    rep.fit_pct = 100.0 * (1.0 - std::sqrt(sse) / std::sqrt(sst));
  } else if (sse == 0.0) {
    rep.fit_pct = 100.0;
  }
  return rep;
}

}  // namespace softpos::sysid
