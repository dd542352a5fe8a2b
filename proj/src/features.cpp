#include "mews/features.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "mews/codec.hpp"

namespace mews {

namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr std::array<std::array<int, 2>, 16> kCircle{{
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
    {0, 3}, {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3},
}};

constexpr int kArcLength = 9;

// Score of the longest contiguous run of `sign` on the circle, or 0 when the
// run is shorter than kArcLength.
int arc_score(const std::array<int, 16>& diff, const std::array<int, 16>& cls, int sign) {
  int best_len = 0;
  int best_start = 0;
  int run = 0;
  for (int i = 0; i < 32; ++i) {
    if (cls[i & 15] == sign) {
      ++run;
      if (run > best_len) {
        best_len = std::min(run, 16);
        best_start = i - best_len + 1;
      }
    } else {
      run = 0;
    }
  }
  if (best_len < kArcLength) return 0;
  int score = 0;
  for (int k = 0; k < best_len; ++k) score += std::abs(diff[(best_start + k) & 15]);
  return score;
}

int corner_score(const RasterImage& img, int x, int y, int t) {
  const int p = img.at(x, y);
  std::array<int, 16> diff{};
  std::array<int, 16> cls{};
  int brighter = 0;
  int darker = 0;
  for (int i = 0; i < 16; ++i) {
    diff[i] = img.at(x + kCircle[i][0], y + kCircle[i][1]) - p;
    cls[i] = diff[i] > t ? 1 : (diff[i] < -t ? -1 : 0);
    brighter += cls[i] == 1;
    darker += cls[i] == -1;
  }
  if (brighter >= kArcLength) return arc_score(diff, cls, 1);
  if (darker >= kArcLength) return arc_score(diff, cls, -1);
  return 0;
}

// True when a ranks ahead of b: higher score, then smaller (y, x).
bool ranks_before(const Keypoint& a, const Keypoint& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

// 5x5 box sums with clamped borders; comparing sums is equivalent to
// comparing box means.
std::vector<std::uint16_t> box_sums(const RasterImage& img) {
  const int w = img.width;
  const int h = img.height;
  std::vector<std::uint16_t> horiz(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int d = -2; d <= 2; ++d) s += img.at(std::clamp(x + d, 0, w - 1), y);
      horiz[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint16_t>(s);
    }
  }
  std::vector<std::uint16_t> out(horiz.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int d = -2; d <= 2; ++d) s += horiz[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint16_t>(s);
    }
  }
  return out;
}

bool inside_descriptor_margin(const RasterImage& img, int x, int y) noexcept {
  return x >= kDescriptorRadius && y >= kDescriptorRadius && x < img.width - kDescriptorRadius &&
         y < img.height - kDescriptorRadius;
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(ByteView b, std::size_t& pos, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
  pos += static_cast<std::size_t>(n);
  return v;
}

constexpr char kDescriptorMagic[4] = {'M', 'D', 'S', '1'};
constexpr std::size_t kEntryBytes = 3 * 4 + 4 * 8;

}  // namespace

const std::array<SamplePair, kDescriptorBits>& sampling_pattern() {
  static const std::array<SamplePair, kDescriptorBits> pattern = [] {
    std::array<SamplePair, kDescriptorBits> out{};
    std::uint32_t state = 42;
    auto next = [&state] {
      state = 1664525u * state + 1013904223u;
      return static_cast<std::int8_t>(static_cast<int>(state % 31u) - kDescriptorRadius);
    };
    for (auto& pair : out) {
      pair.ax = next();
      pair.ay = next();
      pair.bx = next();
      pair.by = next();
    }
    return out;
  }();
  return pattern;
}

RasterImage decode_image(ByteView bytes) {
  RasterImage img = decode_any_size(bytes);
  if (img.width < kMinImageSide || img.height < kMinImageSide) {
    throw Error(ErrorCode::TooSmall,
                fmt::format("image is {}x{}, minimum side is {}", img.width, img.height, kMinImageSide));
  }
  return img;
}

PHash64 perceptual_hash(const RasterImage& img) {
  constexpr int kCols = 9;
  constexpr int kRows = 8;
  std::array<double, kCols * kRows> small{};
  const double sx = static_cast<double>(img.width) / kCols;
  const double sy = static_cast<double>(img.height) / kRows;
  for (int r = 0; r < kRows; ++r) {
    const double fy = r * sy;
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < kCols; ++c) {
      const double fx = c * sx;
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const double top = img.at(x0, y0) * (1.0 - wx) + img.at(x1, y0) * wx;
      const double bottom = img.at(x0, y1) * (1.0 - wx) + img.at(x1, y1) * wx;
      small[r * kCols + c] = top * (1.0 - wy) + bottom * wy;
    }
  }
  std::uint64_t bits = 0;
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < kCols - 1; ++c) {
      bits <<= 1;
      if (small[r * kCols + c + 1] > small[r * kCols + c]) bits |= 1u;
    }
  }
  return PHash64{bits};
}

std::vector<Keypoint> detect_keypoints(const RasterImage& img, const FeatureParams& params) {
  const int w = img.width;
  const int h = img.height;
  std::vector<int> scores(static_cast<std::size_t>(w) * h, 0);
  std::vector<Keypoint> raw;
  for (int y = kDescriptorRadius; y < h - kDescriptorRadius; ++y) {
    for (int x = kDescriptorRadius; x < w - kDescriptorRadius; ++x) {
      const int s = corner_score(img, x, y, params.fast_threshold);
      if (s > 0) {
        scores[static_cast<std::size_t>(y) * w + x] = s;
        raw.push_back({x, y, s});
      }
    }
  }

  std::vector<Keypoint> kept;
  for (const Keypoint& kp : raw) {
    bool suppressed = false;
    for (int dy = -2; dy <= 2 && !suppressed; ++dy) {
      for (int dx = -2; dx <= 2; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = kp.x + dx;
        const int ny = kp.y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int ns = scores[static_cast<std::size_t>(ny) * w + nx];
        if (ns > 0 && ranks_before(Keypoint{nx, ny, ns}, kp)) {
          suppressed = true;
          break;
        }
      }
    }
    if (!suppressed) kept.push_back(kp);
  }

  std::sort(kept.begin(), kept.end(), ranks_before);
  if (kept.size() > params.max_keypoints) kept.resize(params.max_keypoints);
  return kept;
}

DescriptorSet compute_descriptors(const RasterImage& img, std::span<const Keypoint> keypoints) {
  const auto sums = box_sums(img);
  const auto& pattern = sampling_pattern();
  const int w = img.width;
  auto sample = [&](int x, int y) { return sums[static_cast<std::size_t>(y) * w + x]; };

  DescriptorSet out;
  out.reserve(keypoints.size());
  for (const Keypoint& kp : keypoints) {
    if (!inside_descriptor_margin(img, kp.x, kp.y)) continue;
    DescriptorEntry entry{kp, {}};
    for (int k = 0; k < kDescriptorBits; ++k) {
      const SamplePair& p = pattern[k];
      if (sample(kp.x + p.ax, kp.y + p.ay) < sample(kp.x + p.bx, kp.y + p.by)) {
        entry.descriptor.set(k);
      }
    }
    out.push_back(entry);
  }
  return out;
}

Bytes serialize_descriptors(const DescriptorSet& set) {
  Bytes out;
  out.reserve(8 + set.size() * kEntryBytes);
  out.insert(out.end(), std::begin(kDescriptorMagic), std::end(kDescriptorMagic));
  put_u32(out, static_cast<std::uint32_t>(set.size()));
  for (const auto& e : set) {
    put_u32(out, static_cast<std::uint32_t>(e.keypoint.x));
    put_u32(out, static_cast<std::uint32_t>(e.keypoint.y));
    put_u32(out, static_cast<std::uint32_t>(e.keypoint.score));
    for (auto word : e.descriptor.words) put_u64(out, word);
  }
  return out;
}

DescriptorSet parse_descriptors(ByteView bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kDescriptorMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptLog, "descriptor sidecar has a bad header");
  }
  std::size_t pos = 4;
  const auto count = static_cast<std::size_t>(get_le(bytes, pos, 4));
  if (bytes.size() != 8 + count * kEntryBytes) {
    throw Error(ErrorCode::CorruptLog, "descriptor sidecar length mismatch");
  }
  DescriptorSet out(count);
  for (auto& e : out) {
    e.keypoint.x = static_cast<int>(static_cast<std::int32_t>(get_le(bytes, pos, 4)));
    e.keypoint.y = static_cast<int>(static_cast<std::int32_t>(get_le(bytes, pos, 4)));
    e.keypoint.score = static_cast<int>(static_cast<std::int32_t>(get_le(bytes, pos, 4)));
    for (auto& word : e.descriptor.words) word = get_le(bytes, pos, 8);
  }
  return out;
}

AnnotatorRegistry AnnotatorRegistry::with_builtins() {
  AnnotatorRegistry registry;
  for (const char* name : {"faces", "objects", "meme_text"}) {
    registry.add({name, [](const RasterImage&, ByteView) { return Annotation::object(); }});
  }
  return registry;
}

void AnnotatorRegistry::add(Annotator annotator) {
  auto it = std::find_if(annotators_.begin(), annotators_.end(),
                         [&](const Annotator& a) { return a.name == annotator.name; });
  if (it != annotators_.end()) {
    *it = std::move(annotator);
  } else {
    annotators_.push_back(std::move(annotator));
  }
}

FeatureRecord extract_features(const RasterImage& img, ByteView bytes, const ContentHash& hash,
                               const AnnotatorRegistry& annotators, const FeatureParams& params) {
  FeatureRecord record;
  record.content_hash = hash;
  record.width = img.width;
  record.height = img.height;
  record.phash = perceptual_hash(img);
  const auto keypoints = detect_keypoints(img, params);
  record.descriptors = compute_descriptors(img, keypoints);
  for (const Annotator& a : annotators.annotators()) {
    try {
      record.annotations[a.name] = a.run(img, bytes);
    } catch (const std::exception& e) {
      record.annotations[a.name] = {{"status", "failed"}, {"error", e.what()}};
    } catch (...) {
      record.annotations[a.name] = {{"status", "failed"}, {"error", "unknown error"}};
    }
  }
  return record;
}

FeatureRecord extract_features(ByteView bytes, const ContentHash& hash,
                               const AnnotatorRegistry& annotators, const FeatureParams& params) {
  return extract_features(decode_image(bytes), bytes, hash, annotators, params);
}

std::string to_hex(PHash64 h) { return fmt::format("{:016x}", h.bits); }

PHash64 phash_from_hex(std::string_view hex) {
  if (hex.size() != 16) throw Error(ErrorCode::BadRequest, "phash must be 16 hex chars");
  std::uint64_t v = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else throw Error(ErrorCode::BadRequest, "phash must be lowercase hex");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return PHash64{v};
}

}  // namespace mews
