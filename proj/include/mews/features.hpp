#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mews/common.hpp"
#include "mews/digest.hpp"
#include "mews/raster.hpp"

namespace mews {

inline constexpr int kMinImageSide = 8;
inline constexpr int kDescriptorRadius = 15;
inline constexpr int kDescriptorBits = 256;

// 64-bit difference hash over a 9x8 downscale.
struct PHash64 {
  std::uint64_t bits = 0;
  friend bool operator==(const PHash64&, const PHash64&) = default;
};

constexpr int hamming(PHash64 a, PHash64 b) noexcept { return std::popcount(a.bits ^ b.bits); }

struct Keypoint {
  int x = 0;
  int y = 0;
  int score = 0;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

// 256-bit binary descriptor. Bit k lives in words[k / 64] at position k % 64.
struct Descriptor256 {
  std::array<std::uint64_t, 4> words{};

  bool bit(int k) const noexcept { return (words[k >> 6] >> (k & 63)) & 1u; }
  void set(int k) noexcept { words[k >> 6] |= std::uint64_t{1} << (k & 63); }
  // Bits [32 * t, 32 * t + 32), t in [0, 8).
  std::uint32_t slice(int t) const noexcept {
    return static_cast<std::uint32_t>(words[t >> 1] >> ((t & 1) * 32));
  }
  friend bool operator==(const Descriptor256&, const Descriptor256&) = default;
};

inline int hamming(const Descriptor256& a, const Descriptor256& b) noexcept {
  return std::popcount(a.words[0] ^ b.words[0]) + std::popcount(a.words[1] ^ b.words[1]) +
         std::popcount(a.words[2] ^ b.words[2]) + std::popcount(a.words[3] ^ b.words[3]);
}

struct DescriptorEntry {
  Keypoint keypoint;
  Descriptor256 descriptor;
  friend bool operator==(const DescriptorEntry&, const DescriptorEntry&) = default;
};

// Sorted by keypoint score descending, at most FeatureParams::max_keypoints.
using DescriptorSet = std::vector<DescriptorEntry>;

struct FeatureParams {
  int fast_threshold = 20;
  std::size_t max_keypoints = 300;
};

// One BRIEF comparison: bit is set iff I(p + a) < I(p + b).
struct SamplePair {
  std::int8_t ax, ay, bx, by;
};

// The fixed 256-pair pattern: LCG state' = 1664525 * state + 1013904223
// (mod 2^32), seed 42, coordinate = (state' mod 31) - 15, drawn in the order
// ax, ay, bx, by for pair 0, then pair 1, and so on.
const std::array<SamplePair, kDescriptorBits>& sampling_pattern();

// decode_any_size plus the minimum-size check (Error TooSmall).
RasterImage decode_image(ByteView bytes);

PHash64 perceptual_hash(const RasterImage& img);

// FAST-9 on the radius-3 circle, 5x5 non-maximum suppression, top-N by score
// with ties broken by (y, x) ascending. Only pixels at least
// kDescriptorRadius from every border are considered.
std::vector<Keypoint> detect_keypoints(const RasterImage& img, const FeatureParams& params = {});

// Keypoints closer than kDescriptorRadius to a border are dropped. Input order
// is preserved otherwise.
DescriptorSet compute_descriptors(const RasterImage& img, std::span<const Keypoint> keypoints);

Bytes serialize_descriptors(const DescriptorSet& set);
DescriptorSet parse_descriptors(ByteView bytes);

using Annotation = nlohmann::json;

struct Annotator {
  std::string name;
  std::function<Annotation(const RasterImage&, ByteView)> run;
};

// Annotators run in registration order; a later registration under an
// existing name replaces it.
class AnnotatorRegistry {
 public:
  // "faces", "objects" and "meme_text", each producing an empty document.
  static AnnotatorRegistry with_builtins();

  void add(Annotator annotator);
  const std::vector<Annotator>& annotators() const noexcept { return annotators_; }

 private:
  std::vector<Annotator> annotators_;
};

struct FeatureRecord {
  ContentHash content_hash;
  int width = 0;
  int height = 0;
  PHash64 phash;
  DescriptorSet descriptors;
  // annotator name -> document; a failed annotator leaves
  // {"status": "failed", "error": <message>} in its slot.
  nlohmann::json annotations = nlohmann::json::object();
};

FeatureRecord extract_features(const RasterImage& img, ByteView bytes, const ContentHash& hash,
                               const AnnotatorRegistry& annotators,
                               const FeatureParams& params = {});
FeatureRecord extract_features(ByteView bytes, const ContentHash& hash,
                               const AnnotatorRegistry& annotators,
                               const FeatureParams& params = {});

std::string to_hex(PHash64 h);
PHash64 phash_from_hex(std::string_view hex);

}  // namespace mews
