#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mews {

using Instant = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

enum class ErrorCode {
  MalformedLine,
  BadTimestamp,
  NoImages,
  UnsupportedFormat,
  CorruptImage,
  TooSmall,
  DuplicateImage,
  UnknownImage,
  UnknownCluster,
  CorruptLog,
  Io,
  PayloadTooLarge,
  NotFound,
  BadRequest,
  Config,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Platform : std::uint8_t { facebook, instagram, twitter, telegram, other };

std::string_view to_string(Platform p) noexcept;
// Unknown labels map to Platform::other. Matching is case-insensitive.
Platform parse_platform(std::string_view label) noexcept;

// RFC 3339 date-time ("2021-06-01T00:00:00Z", "2021-06-01T07:00:00+07:00").
// Fractional seconds are truncated. Returns nullopt on anything malformed.
std::optional<Instant> parse_rfc3339(std::string_view text);
std::string format_rfc3339(Instant t);

// Lowercase 64-hex-char SHA-256 digest identifying a blob of image bytes.
class ContentHash {
 public:
  ContentHash() = default;

  // Throws Error(BadRequest) unless `hex` is 64 lowercase hex chars.
  static ContentHash from_hex(std::string_view hex);
  static bool is_valid(std::string_view hex) noexcept;

  const std::string& str() const noexcept { return hex_; }
  bool empty() const noexcept { return hex_.empty(); }

  friend bool operator==(const ContentHash&, const ContentHash&) = default;
  friend auto operator<=>(const ContentHash&, const ContentHash&) = default;

 private:
  explicit ContentHash(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
};

// Axis-aligned pixel rectangle; x1/y1 are inclusive keypoint extents, so a
// box around a single point has zero width.
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  long long area() const noexcept {
    return static_cast<long long>(width()) * height();
  }
  bool overlaps(const Box& o) const noexcept {
    return x0 <= o.x1 && o.x0 <= x1 && y0 <= o.y1 && o.y0 <= y1;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

// Intersection over union using area() semantics.
double iou(const Box& a, const Box& b) noexcept;

struct Size {
  int width = 0;
  int height = 0;
};

}  // namespace mews

template <>
struct std::hash<mews::ContentHash> {
  std::size_t operator()(const mews::ContentHash& h) const noexcept {
    return std::hash<std::string>{}(h.str());
  }
};
