#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "softpos/errors.hpp"

namespace softpos::sysid {

inline constexpr double kDefaultSplit = 0.6;

/// Paired input/output record with a train/test split at floor(split·N).
struct IdDataset {
  std::vector<double> u;
  std::vector<double> y;  // mm
  double Ts = 1.0 / 15.0;
  double split = kDefaultSplit;

  void validate() const {
    if (u.size() != y.size()) throw InvalidInput("dataset: u and y lengths differ");
    if (u.size() < 10) throw InvalidInput("dataset: at least 10 samples required");
    if (!(Ts > 0.0)) throw InvalidInput("dataset: Ts must be > 0");
    if (!(split > 0.0 && split < 1.0)) throw InvalidInput("dataset: split must lie in (0, 1)");
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!std::isfinite(u[i]) || !std::isfinite(y[i])) throw InvalidInput("dataset: non-finite sample");
    }
  }

  std::size_t size() const { return y.size(); }
  std::size_t train_size() const { return static_cast<std::size_t>(std::floor(split * static_cast<double>(size()))); }

  std::span<const double> train_u() const { return std::span(u).first(train_size()); }
  std::span<const double> train_y() const { return std::span(y).first(train_size()); }
  std::span<const double> test_u() const { return std::span(u).subspan(train_size()); }
  std::span<const double> test_y() const { return std::span(y).subspan(train_size()); }
};

}  // namespace softpos::sysid
