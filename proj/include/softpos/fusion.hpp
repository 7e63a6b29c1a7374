#pragma once

// Track-to-track fusion of independent local tracks by information
// (inverse-covariance) weighting. Cross-covariances between local tracks are
// assumed zero.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "softpos/errors.hpp"
#include "softpos/estimation.hpp"

namespace softpos::fusion {

using estimation::Covariance2;
using estimation::KinematicState;
using estimation::ProcessModel;

/// Tolerance on timestamp agreement between tracks passed to fuse().
inline constexpr double kTimeAlignmentTolerance = 1e-6;

struct LocalTrack {
  std::uint32_t sensor_id = 0;
  std::uint64_t seq = 0;
  double time = 0.0;  // s
  KinematicState state;
  Covariance2 cov;

  friend bool operator==(const LocalTrack&, const LocalTrack&) = default;
};

struct FusedTrack {
  double time = 0.0;
  KinematicState state;
  Covariance2 cov;
  std::vector<std::uint32_t> contributors;
};

/// Raised when fusion preconditions are violated. `sensor_id()` names the
/// offending contributor when one can be identified.
class FusionError : public InvalidInput {
 public:
  FusionError(const std::string& what, std::int64_t sensor_id = -1)
      : InvalidInput(what), sensor_id_(sensor_id) {}
  std::int64_t sensor_id() const { return sensor_id_; }

 private:
  std::int64_t sensor_id_;
};

/// P_F = (Σ P_s⁻¹)⁻¹, x_F = P_F Σ P_s⁻¹ x_s.
inline FusedTrack fuse(std::span<const LocalTrack> tracks) {
  if (tracks.empty()) throw FusionError("fuse: at least one track required");
  const double t0 = tracks.front().time;
  Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
  Eigen::Vector2d info_state = Eigen::Vector2d::Zero();
  FusedTrack out;
  out.time = t0;
  for (const auto& tr : tracks) {
    if (std::abs(tr.time - t0) > kTimeAlignmentTolerance) {
      throw FusionError("fuse: track from sensor " + std::to_string(tr.sensor_id) +
                            " is not time-aligned; align tracks to a common time first",
                        tr.sensor_id);
    }
    if (!tr.cov.finite() || !tr.cov.invertible()) {
      throw FusionError("fuse: covariance of sensor " + std::to_string(tr.sensor_id) + " is singular", tr.sensor_id);
    }
    const Eigen::Matrix2d inv = tr.cov.matrix().inverse();
    info += inv;
    info_state += inv * tr.state.vector();
    out.contributors.push_back(tr.sensor_id);
  }
  if (tracks.size() == 1) {
    out.state = tracks.front().state;
    out.state.time = t0;
    out.cov = tracks.front().cov;
    return out;
  }
  const Eigen::Matrix2d p = info.inverse();
  const Eigen::Vector2d x = p * info_state;
  out.cov = Covariance2::from_matrix(p);
  out.state = tracks.front().state;
  out.state.position = x(0);
  out.state.velocity = x(1);
  out.state.time = t0;
  return out;
}

inline FusedTrack fuse(std::initializer_list<LocalTrack> tracks) {
  return fuse(std::span<const LocalTrack>(tracks.begin(), tracks.size()));
}

/// Propagates a track forward to t_target with the constant-velocity model.
inline LocalTrack align(const LocalTrack& track, double t_target, double sigma_a) {
  const double dt = t_target - track.time;
  if (dt < -kTimeAlignmentTolerance) {
    throw FusionError("align: target time precedes track time (no backward smoothing)", track.sensor_id);
  }
  if (dt <= 0.0) return track;
  auto pred = estimation::predict(track.state, track.cov, ProcessModel{dt, sigma_a});
  LocalTrack out = track;
  out.time = t_target;
  out.state = pred.state;
  out.state.step = track.state.step;
  out.state.time = t_target;
  out.cov = pred.cov;
  return out;
}

inline LocalTrack align(const LocalTrack& track, double t_target, const ProcessModel& model) {
  return align(track, t_target, model.sigma_a);
}

/// Loewner check P_s − P_F ⪰ 0, tolerance relative to the contributor scale.
inline bool dominates(const Covariance2& contributor, const Covariance2& fused, double rel_tol = 1e-9) {
  const Covariance2 diff{contributor.p11 - fused.p11, contributor.p12 - fused.p12, contributor.p22 - fused.p22};
  const double s = contributor.scale();
  const double tr = diff.trace();
  const double det = diff.determinant();
  // 2×2 PSD: both eigenvalues ≥ −tol.
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  const double lmin = 0.5 * tr - disc;
  return lmin >= -rel_tol * s;
}

}  // namespace softpos::fusion
