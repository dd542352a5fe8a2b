#pragma once

#include <vector>

#include "mews/common.hpp"
#include "mews/digest.hpp"
#include "mews/features.hpp"
#include "mews/raster.hpp"

namespace mews {

struct CopyMoveParams {
  int max_hamming = 48;
  int min_distance = 16;
  int offset_tolerance = 4;
  int min_support = 6;
};

// Offsets are oriented so that dx > 0, or dx == 0 and dy > 0; `source` is the
// box on the origin side of the offset and `destination` the displaced one.
struct RegionPair {
  Box source;
  Box destination;
  int support = 0;
  int dx = 0;
  int dy = 0;
};

struct CopyMoveReport {
  std::vector<RegionPair> region_pairs;  // support descending

  int total_support() const noexcept;
  bool empty() const noexcept { return region_pairs.empty(); }
};

// One cell per 16x16 block (partial blocks at the right and bottom edges).
struct Heatmap {
  int width_blocks = 0;
  int height_blocks = 0;
  std::vector<double> cells;

  double at(int bx, int by) const noexcept {
    return cells[static_cast<std::size_t>(by) * width_blocks + bx];
  }
  bool all_zero() const noexcept;
  double fraction_above(double threshold) const noexcept;
};

struct ForensicsParams {
  CopyMoveParams copy_move;
  int jpeg_quality = 90;
  int block_size = 16;
  double support_saturation = 30.0;
  double hot_cell_threshold = 0.5;
  double hot_fraction_saturation = 0.10;
};

struct ManipulationReport {
  ContentHash content_hash;
  CopyMoveReport copy_move;
  Heatmap splice;
  double verdict = 0.0;
};

CopyMoveReport copy_move_detect(const RasterImage& img, const DescriptorSet& descriptors,
                                const CopyMoveParams& params = {});

// Re-encode at `quality`, decode, then average |original - recompressed| per
// block and max-normalize. All-zero residual yields an all-zero map.
Heatmap recompression_heatmap(const RasterImage& img, int quality = 90, int block_size = 16);
Heatmap recompression_heatmap(ByteView original, int quality = 90, int block_size = 16);

// max(min(1, support / 30), f * min(1, f / 0.10)) where f is the fraction of
// cells above 0.5.
double manipulation_verdict(const CopyMoveReport& report, const Heatmap& heat,
                            const ForensicsParams& params = {});

ManipulationReport analyze_manipulation(const RasterImage& img, const DescriptorSet& descriptors,
                                        const ContentHash& hash,
                                        const ForensicsParams& params = {});

// 8-bit grayscale PNG, one pixel per block, value round(255 * cell).
Bytes heatmap_png(const Heatmap& heat);

}  // namespace mews
