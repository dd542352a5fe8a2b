#include "mews/common.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <fmt/format.h>

namespace mews {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedLine: return "malformed_line";
    case ErrorCode::BadTimestamp: return "bad_timestamp";
    case ErrorCode::NoImages: return "no_images";
    case ErrorCode::UnsupportedFormat: return "unsupported_format";
    case ErrorCode::CorruptImage: return "corrupt_image";
    case ErrorCode::TooSmall: return "too_small";
    case ErrorCode::DuplicateImage: return "duplicate_image";
    case ErrorCode::UnknownImage: return "unknown_image";
    case ErrorCode::UnknownCluster: return "unknown_cluster";
    case ErrorCode::CorruptLog: return "corrupt_log";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::PayloadTooLarge: return "payload_too_large";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::BadRequest: return "bad_request";
    case ErrorCode::Config: return "config_error";
  }
  return "unknown";
}

namespace {

constexpr std::array<std::pair<std::string_view, Platform>, 5> kPlatforms{{
    {"facebook", Platform::facebook},
    {"instagram", Platform::instagram},
    {"twitter", Platform::twitter},
    {"telegram", Platform::telegram},
    {"other", Platform::other},
}};

// Parses exactly `n` decimal digits at `pos`, advancing it.
std::optional<int> digits(std::string_view s, std::size_t& pos, int n) {
  if (pos + n > s.size()) return std::nullopt;
  int v = 0;
  for (int i = 0; i < n; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  pos += n;
  return v;
}

bool expect(std::string_view s, std::size_t& pos, std::string_view chars) {
  if (pos >= s.size() || chars.find(s[pos]) == std::string_view::npos) return false;
  ++pos;
  return true;
}

}  // namespace

std::string_view to_string(Platform p) noexcept {
  for (const auto& [name, value] : kPlatforms) {
    if (value == p) return name;
  }
  return "other";
}

Platform parse_platform(std::string_view label) noexcept {
  std::string lower(label);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& [name, value] : kPlatforms) {
    if (name == lower) return value;
  }
  return Platform::other;
}

std::optional<Instant> parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  std::size_t pos = 0;
  const auto year = digits(s, pos, 4);
  if (!year || !expect(s, pos, "-")) return std::nullopt;
  const auto month = digits(s, pos, 2);
  if (!month || !expect(s, pos, "-")) return std::nullopt;
  const auto day = digits(s, pos, 2);
  if (!day || !expect(s, pos, "Tt ")) return std::nullopt;
  const auto hour = digits(s, pos, 2);
  if (!hour || !expect(s, pos, ":")) return std::nullopt;
  const auto minute = digits(s, pos, 2);
  if (!minute || !expect(s, pos, ":")) return std::nullopt;
  const auto second = digits(s, pos, 2);
  if (!second) return std::nullopt;

  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == start) return std::nullopt;
  }

  int offset_minutes = 0;
  if (pos >= s.size()) return std::nullopt;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '-' ? -1 : 1;
    ++pos;
    const auto oh = digits(s, pos, 2);
    if (!oh || !expect(s, pos, ":")) return std::nullopt;
    const auto om = digits(s, pos, 2);
    if (!om || *oh > 23 || *om > 59) return std::nullopt;
    offset_minutes = sign * (*oh * 60 + *om);
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;

  const year_month_day ymd{std::chrono::year{*year}, std::chrono::month{static_cast<unsigned>(*month)},
                           std::chrono::day{static_cast<unsigned>(*day)}};
  if (!ymd.ok() || *hour > 23 || *minute > 59 || *second > 60) return std::nullopt;

  const auto local = sys_days{ymd} + hours{*hour} + minutes{*minute} + seconds{*second};
  return time_point_cast<seconds>(local - minutes{offset_minutes});
}

std::string format_rfc3339(Instant t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

bool ContentHash::is_valid(std::string_view hex) noexcept {
  return hex.size() == 64 && std::all_of(hex.begin(), hex.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

ContentHash ContentHash::from_hex(std::string_view hex) {
  if (!is_valid(hex)) {
    throw Error(ErrorCode::BadRequest, fmt::format("invalid content hash '{}'", hex));
  }
  return ContentHash(std::string(hex));
}

double iou(const Box& a, const Box& b) noexcept {
  const int ix0 = std::max(a.x0, b.x0);
  const int iy0 = std::max(a.y0, b.y0);
  const int ix1 = std::min(a.x1, b.x1);
  const int iy1 = std::min(a.y1, b.y1);
  const long long inter =
      (ix1 > ix0 && iy1 > iy0) ? static_cast<long long>(ix1 - ix0) * (iy1 - iy0) : 0;
  const long long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace mews
