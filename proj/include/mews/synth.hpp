#pragma once

// Synthetic image and feed generators for tests, demos and the acceptance
// corpora. Everything is a deterministic function of the seed.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mews/common.hpp"
#include "mews/digest.hpp"
#include "mews/raster.hpp"

namespace mews::synth {

// Portable integer draw in [lo, hi]; std::uniform_int_distribution is not
// specified bit-for-bit across standard libraries.
inline int uniform(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}
inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct SceneParams {
  int width = 256;
  int height = 256;
  int polygons = 90;
  int ellipses = 20;
  int noise = 2;         // uniform +-noise per pixel
  double shading = 6.0;  // max intensity slope inside a polygon, per pixel
};

// Shaded gradient background with random rotated polygons and ellipses.
RasterImage scene(std::uint64_t seed, const SceneParams& params = {});

// Uniform white noise in [0, 255].
RasterImage white_noise(std::uint64_t seed, int width, int height);

RasterImage crop(const RasterImage& img, int x, int y, int width, int height);

// Dark caption band with seed-dependent bright glyph strokes covering
// `area_fraction` of the image along its top or bottom edge.
RasterImage overlay_caption(const RasterImage& img, double area_fraction, std::uint64_t seed);

RasterImage jpeg_roundtrip(const RasterImage& img, int quality);

// A cropped / recompressed / captioned derivative of `base`.
struct Variant {
  RasterImage image;
  Bytes bytes;           // JPEG at `quality`
  int crop_x = 0;        // crop origin in base coordinates
  int crop_y = 0;
  double crop_area = 1;  // crop area / base area
  int quality = 90;
  double overlay = 0;    // caption area fraction
};

struct VariantParams {
  double min_crop_area = 0.5;
  int min_quality = 60;
  int max_quality = 95;
  double max_overlay = 0.2;
};

Variant make_variant(const RasterImage& base, std::uint64_t seed, const VariantParams& params = {});

struct CopyMoveForgery {
  RasterImage image;
  Box source;       // pixel extents of the copied patch, inclusive
  Box destination;  // pixel extents of the pasted patch, inclusive
};

struct ForgeryParams {
  int width = 256;
  int height = 256;
  int min_patch = 32;
  int max_patch = 64;
  int min_offset = 48;
};

// Copies a square patch to a displaced location. Offsets point right, or
// straight down when horizontal displacement is zero, and the two patches
// never overlap.
CopyMoveForgery copy_move_forgery(std::uint64_t seed, const ForgeryParams& params = {});

struct SpliceForgery {
  Bytes bytes;  // lossless PNG of the composite
  RasterImage image;
  Box mask;    // pixel extents of the pasted region, inclusive
};

struct SpliceParams {
  int width = 256;
  int height = 256;
  int host_quality = 90;
  int patch_quality = 40;
  int min_patch = 48;
  int max_patch = 96;
};

// Host decoded from host_quality JPEG with a region replaced by content
// decoded from a patch_quality JPEG of another scene. The composite itself
// is stored losslessly so each region keeps its own compression history.
SpliceForgery splice_forgery(std::uint64_t seed, const SpliceParams& params = {});

// One image of a generated corpus; `group` is -1 for unrelated images.
struct CorpusImage {
  std::string name;
  Bytes bytes;
  int group = -1;
};

struct Corpus {
  std::vector<CorpusImage> images;
};

// `total` images of which 2 * `pairs` form known duplicate pairs (groups
// 0..pairs-1), the rest unrelated.
Corpus matching_corpus(std::uint64_t seed, int total = 200, int pairs = 40);

// `total` images with `groups` near-duplicate groups of `group_size`
// members (base image plus derivatives); the rest are singletons.
Corpus cluster_corpus(std::uint64_t seed, int total = 500, int groups = 20, int group_size = 8);

// One post per corpus image, in corpus order, `spacing` apart, cycling
// through the platforms. Image references are the corpus file names.
std::vector<std::string> corpus_feed(const Corpus& corpus, Instant start, Seconds spacing = Seconds{60});

struct TimelineParams {
  int days = 7;
  int clusters = 20;             // cluster 0 is the planted one
  int variants = 2;              // derivatives per quiet cluster besides its base
  int burst_window = 120;        // hour index of the burst
  int burst_posts = 20;
  double background_rate = 0.3;  // chance of one post per cluster per window
  Instant start = Instant{Seconds{1622505600}};  // 2021-06-01T00:00:00Z
};

// A week of hourly posting: quiet clusters post at most once per window,
// the planted cluster (a copy-move forgery whose verdict is >= 0.5) posts
// `burst_posts` times in `burst_window`, split across twitter and telegram.
struct Timeline {
  Corpus files;  // group = cluster index
  std::vector<std::string> lines;
  Instant burst_start;
  int planted_group = 0;
};

Timeline trend_timeline(std::uint64_t seed, const TimelineParams& params = {});

// JSONL feed line for the ingest schema.
std::string feed_line(const std::string& post_id, std::string_view platform, Instant timestamp,
                      const std::string& text, const std::vector<std::string>& images);

}  // namespace mews::synth
