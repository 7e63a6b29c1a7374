#pragma once

// Central fusion site: keeps the latest local track per sensor, aligns them to
// each fusion tick and fuses the fresh ones.

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "softpos/estimation.hpp"
#include "softpos/fusion.hpp"
#include "softpos/track_frame.hpp"

namespace softpos::fusion {

inline constexpr double kDefaultFusionRate = 15.0;  // Hz
inline constexpr int kDefaultStalenessTicks = 3;

inline LocalTrack make_local_track(std::uint32_t sensor_id, std::uint64_t seq, const estimation::Estimate& est) {
  LocalTrack t;
  t.sensor_id = sensor_id;
  t.seq = seq;
  t.time = est.state.time;
  t.state = est.state;
  t.state.step = static_cast<std::int64_t>(seq);
  t.cov = est.cov;
  return t;
}

struct FusionSiteConfig {
  double rate = kDefaultFusionRate;
  int staleness_ticks = kDefaultStalenessTicks;
  double sigma_a = estimation::kDefaultSigmaA;

  double tick_interval() const { return 1.0 / rate; }
  double staleness_budget() const { return staleness_ticks * tick_interval(); }

  void validate() const {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidInput("fusion: rate must be > 0");
    if (staleness_ticks < 1) throw InvalidInput("fusion: staleness_ticks must be >= 1");
    estimation::ProcessModel{1.0, sigma_a}.validate();
  }
};

struct TickResult {
  double time = 0.0;
  std::optional<FusedTrack> fused;
  std::vector<LocalTrack> aligned;          // contributors, aligned to `time`
  std::vector<std::uint32_t> stale;         // sensors excluded this tick
  bool gap = false;                         // no fresh sensor at all
};

class FusionSite {
 public:
  explicit FusionSite(FusionSiteConfig config) : config_(config) { config_.validate(); }

  /// Stores a track as the latest for its sensor. Returns false (and counts a
  /// rejection) if its seq does not strictly increase.
  bool accept(const LocalTrack& track) {
    auto it = latest_.find(track.sensor_id);
    if (it != latest_.end() && track.seq <= it->second.seq) {
      ++rejected_;
      return false;
    }
    latest_[track.sensor_id] = track;
    return true;
  }

  /// Registers a sensor so that its silence shows up as staleness.
  void expect_sensor(std::uint32_t sensor_id) { expected_.insert(sensor_id); }

  TickResult tick(double t) const {
    TickResult r;
    r.time = t;
    const double budget = config_.staleness_budget() + 1e-9;
    for (const auto id : expected_) {
      if (!latest_.contains(id)) r.stale.push_back(id);
    }
    for (const auto& [id, track] : latest_) {
      if (track.time > t + kTimeAlignmentTolerance) continue;  // from the future; not consumed yet
      if (t - track.time > budget) {
        r.stale.push_back(id);
        continue;
      }
      r.aligned.push_back(align(track, t, config_.sigma_a));
    }
    if (r.aligned.empty()) {
      r.gap = true;
      return r;
    }
    r.fused = fuse(std::span<const LocalTrack>(r.aligned));
    return r;
  }

  std::uint64_t rejected() const { return rejected_; }
  const FusionSiteConfig& config() const { return config_; }

 private:
  FusionSiteConfig config_;
  std::map<std::uint32_t, LocalTrack> latest_;
  std::set<std::uint32_t> expected_;
  std::uint64_t rejected_ = 0;
};

struct FusionLoopResult {
  std::vector<TickResult> ticks;
  std::vector<double> gaps;  // tick times with no fresh sensor
  std::vector<std::string> decode_errors;
};

/// Runs the fusion site over N framed byte streams. Ticks run at `config.rate`
/// from `t_start` to `t_end` inclusive; before each tick, every frame whose
/// timestamp is at or before the tick is consumed. Corrupt frames are dropped
/// and reported.
inline FusionLoopResult fusion_loop(std::span<const std::span<const std::uint8_t>> streams,
                                    const FusionSiteConfig& config, double t_start, double t_end) {
  if (streams.empty()) throw InvalidInput("fusion_loop: at least one stream required");
  FusionSite site(config);
  FusionLoopResult out;

  struct Cursor {
    std::vector<LocalTrack> frames;
    std::size_t next = 0;
  };
  std::vector<Cursor> cursors(streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    FrameReader reader;
    reader.feed(streams[s]);
    while (reader.has_frame()) {
      try {
        cursors[s].frames.push_back(reader.next());
      } catch (const FrameDecodeError& e) {
        out.decode_errors.emplace_back("stream " + std::to_string(s) + ": " + e.what());
      }
    }
    if (reader.pending_bytes() != 0) {
      out.decode_errors.emplace_back("stream " + std::to_string(s) + ": trailing partial frame");
    }
    if (!cursors[s].frames.empty()) site.expect_sensor(cursors[s].frames.front().sensor_id);
  }

  const double dt = config.tick_interval();
  const auto n_ticks = static_cast<std::int64_t>(std::floor((t_end - t_start) / dt + 1e-9)) + 1;
  for (std::int64_t i = 0; i < n_ticks; ++i) {
    const double t = t_start + static_cast<double>(i) * dt;
    for (auto& c : cursors) {
      while (c.next < c.frames.size() && c.frames[c.next].time <= t + kTimeAlignmentTolerance) {
        site.accept(c.frames[c.next]);
        ++c.next;
      }
    }
    TickResult r = site.tick(t);
    if (r.gap) out.gaps.push_back(t);
    out.ticks.push_back(std::move(r));
  }
  return out;
}

/// Single-writer/single-reader handoff of encoded frames between a sensor
/// thread and the fusion thread.
class FrameChannel {
 public:
  void send(const Frame& frame) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(frame);
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  /// Blocks until a frame is available or the channel is closed and drained.
  std::optional<Frame> receive() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    Frame f = queue_.front();
    queue_.pop_front();
    return f;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Frame> queue_;
  bool closed_ = false;
};

}  // namespace softpos::fusion
