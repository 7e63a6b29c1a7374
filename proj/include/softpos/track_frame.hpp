#pragma once

// Wire format for local tracks exchanged between sensor sites and the fusion
// site. Little-endian:
//
//   offset  size  field
//        0     4  magic "TTF1"
//        4     1  version (1)
//        5     4  sensor_id  u32
//        9     8  seq        u64
//       17     8  t          f64 (s)
//       25     8  d          f64 (mm)
//       33     8  v          f64 (mm/s)
//       41     8  p11        f64
//       49     8  p12        f64
//       57     8  p22        f64
//       65     4  CRC-32 (IEEE) of bytes [0, 65)
//
// Frames are self-delimiting by their fixed length; a byte stream is a plain
// concatenation of frames.

#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "softpos/fusion.hpp"

namespace softpos::fusion {

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'T', 'T', 'F', '1'};
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFramePayloadSize = 65;
inline constexpr std::size_t kFrameSize = kFramePayloadSize + 4;

using Frame = std::array<std::uint8_t, kFrameSize>;

enum class FrameErrorKind { kShortFrame, kBadMagic, kBadVersion, kBadChecksum, kNonFinite, kInvariantViolation };

inline const char* to_string(FrameErrorKind kind) {
  switch (kind) {
    case FrameErrorKind::kShortFrame: return "short frame";
    case FrameErrorKind::kBadMagic: return "bad magic";
    case FrameErrorKind::kBadVersion: return "unsupported version";
    case FrameErrorKind::kBadChecksum: return "checksum mismatch";
    case FrameErrorKind::kNonFinite: return "non-finite field";
    case FrameErrorKind::kInvariantViolation: return "covariance invariant violated";
  }
  return "unknown";
}

class FrameDecodeError : public InvalidInput {
 public:
  FrameDecodeError(FrameErrorKind kind, const std::string& detail)
      : InvalidInput(std::string("track frame: ") + to_string(kind) + (detail.empty() ? "" : ": " + detail)),
        kind_(kind) {}
  FrameErrorKind kind() const { return kind_; }

 private:
  FrameErrorKind kind_;
};

inline std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

template <typename T>
void put_le(std::uint8_t* out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(in[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline Frame encode_frame(const LocalTrack& track) {
  Frame f{};
  std::copy(kFrameMagic.begin(), kFrameMagic.end(), f.begin());
  f[4] = kFrameVersion;
  detail::put_le<std::uint32_t>(&f[5], track.sensor_id);
  detail::put_le<std::uint64_t>(&f[9], track.seq);
  detail::put_le<double>(&f[17], track.time);
  detail::put_le<double>(&f[25], track.state.position);
  detail::put_le<double>(&f[33], track.state.velocity);
  detail::put_le<double>(&f[41], track.cov.p11);
  detail::put_le<double>(&f[49], track.cov.p12);
  detail::put_le<double>(&f[57], track.cov.p22);
  detail::put_le<std::uint32_t>(&f[65], crc32_ieee({f.data(), kFramePayloadSize}));
  return f;
}

/// Decodes the first kFrameSize bytes. The decoded state carries step = seq
/// and time = t.
inline LocalTrack decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameSize) {
    throw FrameDecodeError(FrameErrorKind::kShortFrame,
                           std::to_string(bytes.size()) + " of " + std::to_string(kFrameSize) + " bytes");
  }
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), bytes.begin())) {
    throw FrameDecodeError(FrameErrorKind::kBadMagic, "");
  }
  if (bytes[4] != kFrameVersion) {
    throw FrameDecodeError(FrameErrorKind::kBadVersion, std::to_string(bytes[4]));
  }
  const auto stored_crc = detail::get_le<std::uint32_t>(&bytes[65]);
  if (stored_crc != crc32_ieee(bytes.first(kFramePayloadSize))) {
    throw FrameDecodeError(FrameErrorKind::kBadChecksum, "");
  }
  LocalTrack t;
  t.sensor_id = detail::get_le<std::uint32_t>(&bytes[5]);
  t.seq = detail::get_le<std::uint64_t>(&bytes[9]);
  t.time = detail::get_le<double>(&bytes[17]);
  t.state.position = detail::get_le<double>(&bytes[25]);
  t.state.velocity = detail::get_le<double>(&bytes[33]);
  t.cov.p11 = detail::get_le<double>(&bytes[41]);
  t.cov.p12 = detail::get_le<double>(&bytes[49]);
  t.cov.p22 = detail::get_le<double>(&bytes[57]);
  t.state.step = static_cast<std::int64_t>(t.seq);
  t.state.time = t.time;
  if (!std::isfinite(t.time) || !t.state.finite() || !t.cov.finite()) {
    throw FrameDecodeError(FrameErrorKind::kNonFinite, "sensor " + std::to_string(t.sensor_id));
  }
  if (!t.cov.invertible()) {
    throw FrameDecodeError(FrameErrorKind::kInvariantViolation,
                           "sensor " + std::to_string(t.sensor_id) + " covariance not positive definite");
  }
  return t;
}

/// Incremental decoder for a byte stream carrying concatenated frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

  bool has_frame() const { return buffer_.size() - offset_ >= kFrameSize; }

  /// Pops and decodes the next complete frame. Throws FrameDecodeError for
  /// corrupt frames (the frame's bytes are consumed either way).
  LocalTrack next() {
    if (!has_frame()) throw FrameDecodeError(FrameErrorKind::kShortFrame, "no complete frame buffered");
    std::span<const std::uint8_t> view(buffer_.data() + offset_, kFrameSize);
    offset_ += kFrameSize;
    LocalTrack t = decode_frame(view);
    compact();
    return t;
  }

  std::size_t pending_bytes() const { return buffer_.size() - offset_; }

 private:
  void compact() {
    if (offset_ > 4096 && offset_ * 2 > buffer_.size()) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
      offset_ = 0;
    }
  }

  std::vector<std::uint8_t> buffer_;
  std::size_t offset_ = 0;
};

}  // namespace softpos::fusion
