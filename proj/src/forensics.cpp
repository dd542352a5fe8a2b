#include "mews/forensics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>

#include "mews/codec.hpp"

namespace mews {

namespace {

struct SelfMatch {
  int src;
  int dst;
  int dx;
  int dy;
};

Box bounding_box(const DescriptorSet& set, const std::vector<int>& indices) {
  Box b{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
        std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
  for (int i : indices) {
    const Keypoint& kp = set[static_cast<std::size_t>(i)].keypoint;
    b.x0 = std::min(b.x0, kp.x);
    b.y0 = std::min(b.y0, kp.y);
    b.x1 = std::max(b.x1, kp.x);
    b.y1 = std::max(b.y1, kp.y);
  }
  return b;
}

bool within(const SelfMatch& a, const SelfMatch& b, int tol) noexcept {
  return std::abs(a.dx - b.dx) <= tol && std::abs(a.dy - b.dy) <= tol;
}

}  // namespace

int CopyMoveReport::total_support() const noexcept {
  int total = 0;
  for (const auto& p : region_pairs) total += p.support;
  return total;
}

bool Heatmap::all_zero() const noexcept {
  return std::all_of(cells.begin(), cells.end(), [](double c) { return c == 0.0; });
}

double Heatmap::fraction_above(double threshold) const noexcept {
  if (cells.empty()) return 0.0;
  const auto hot = std::count_if(cells.begin(), cells.end(), [&](double c) { return c > threshold; });
  return static_cast<double>(hot) / static_cast<double>(cells.size());
}

CopyMoveReport copy_move_detect(const RasterImage& img, const DescriptorSet& descriptors,
                                const CopyMoveParams& params) {
  (void)img;
  const int n = static_cast<int>(descriptors.size());
  const long long min_d2 = static_cast<long long>(params.min_distance) * params.min_distance;

  std::set<std::pair<int, int>> seen;
  std::vector<SelfMatch> matches;
  for (int i = 0; i < n; ++i) {
    const auto& a = descriptors[static_cast<std::size_t>(i)];
    int best = -1;
    int best_dist = params.max_hamming + 1;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto& b = descriptors[static_cast<std::size_t>(j)];
      const long long ddx = b.keypoint.x - a.keypoint.x;
      const long long ddy = b.keypoint.y - a.keypoint.y;
      if (ddx * ddx + ddy * ddy < min_d2) continue;
      const int d = hamming(a.descriptor, b.descriptor);
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    if (best < 0) continue;
    int src = i;
    int dst = best;
    int dx = descriptors[static_cast<std::size_t>(dst)].keypoint.x - a.keypoint.x;
    int dy = descriptors[static_cast<std::size_t>(dst)].keypoint.y - a.keypoint.y;
    if (dx < 0 || (dx == 0 && dy < 0)) {
      std::swap(src, dst);
      dx = -dx;
      dy = -dy;
    }
    if (seen.emplace(src, dst).second) matches.push_back({src, dst, dx, dy});
  }

  CopyMoveReport report;
  std::vector<bool> used(matches.size(), false);
  for (;;) {
    int seed = -1;
    int seed_count = 0;
    for (std::size_t m = 0; m < matches.size(); ++m) {
      if (used[m]) continue;
      int count = 0;
      for (std::size_t k = 0; k < matches.size(); ++k) {
        if (!used[k] && within(matches[m], matches[k], params.offset_tolerance)) ++count;
      }
      const bool better =
          count > seed_count ||
          (count == seed_count && seed >= 0 &&
           std::pair(matches[m].dx, matches[m].dy) <
               std::pair(matches[static_cast<std::size_t>(seed)].dx, matches[static_cast<std::size_t>(seed)].dy));
      if (better) {
        seed = static_cast<int>(m);
        seed_count = count;
      }
    }
    if (seed < 0 || seed_count < params.min_support) break;

    const SelfMatch center = matches[static_cast<std::size_t>(seed)];
    std::vector<int> srcs;
    std::vector<int> dsts;
    long long sum_dx = 0;
    long long sum_dy = 0;
    for (std::size_t k = 0; k < matches.size(); ++k) {
      if (used[k] || !within(center, matches[k], params.offset_tolerance)) continue;
      used[k] = true;
      srcs.push_back(matches[k].src);
      dsts.push_back(matches[k].dst);
      sum_dx += matches[k].dx;
      sum_dy += matches[k].dy;
    }
    RegionPair pair;
    pair.source = bounding_box(descriptors, srcs);
    pair.destination = bounding_box(descriptors, dsts);
    pair.support = static_cast<int>(srcs.size());
    pair.dx = static_cast<int>(std::lround(static_cast<double>(sum_dx) / pair.support));
    pair.dy = static_cast<int>(std::lround(static_cast<double>(sum_dy) / pair.support));
    if (!pair.source.overlaps(pair.destination)) report.region_pairs.push_back(pair);
  }
  std::stable_sort(report.region_pairs.begin(), report.region_pairs.end(),
                   [](const RegionPair& a, const RegionPair& b) { return a.support > b.support; });
  return report;
}

Heatmap recompression_heatmap(const RasterImage& img, int quality, int block_size) {
  const RasterImage recompressed = decode_any_size(encode_jpeg(img, quality));
  Heatmap heat;
  heat.width_blocks = (img.width + block_size - 1) / block_size;
  heat.height_blocks = (img.height + block_size - 1) / block_size;
  heat.cells.assign(static_cast<std::size_t>(heat.width_blocks) * heat.height_blocks, 0.0);
  std::vector<int> counts(heat.cells.size(), 0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto cell = static_cast<std::size_t>(y / block_size) * heat.width_blocks + x / block_size;
      heat.cells[cell] += std::abs(static_cast<int>(img.at(x, y)) - recompressed.at(x, y));
      ++counts[cell];
    }
  }
  double peak = 0.0;
  for (std::size_t i = 0; i < heat.cells.size(); ++i) {
    heat.cells[i] /= counts[i];
    peak = std::max(peak, heat.cells[i]);
  }
  if (peak > 0.0) {
    for (double& c : heat.cells) c /= peak;
  }
  return heat;
}

Heatmap recompression_heatmap(ByteView original, int quality, int block_size) {
  return recompression_heatmap(decode_image(original), quality, block_size);
}

double manipulation_verdict(const CopyMoveReport& report, const Heatmap& heat,
                            const ForensicsParams& params) {
  const double copy_move = std::min(1.0, report.total_support() / params.support_saturation);
  const double f = heat.fraction_above(params.hot_cell_threshold);
  const double splice = f * std::min(1.0, f / params.hot_fraction_saturation);
  return std::clamp(std::max(copy_move, splice), 0.0, 1.0);
}

ManipulationReport analyze_manipulation(const RasterImage& img, const DescriptorSet& descriptors,
                                        const ContentHash& hash, const ForensicsParams& params) {
  ManipulationReport report;
  report.content_hash = hash;
  report.copy_move = copy_move_detect(img, descriptors, params.copy_move);
  report.splice = recompression_heatmap(img, params.jpeg_quality, params.block_size);
  report.verdict = manipulation_verdict(report.copy_move, report.splice, params);
  return report;
}

Bytes heatmap_png(const Heatmap& heat) {
  RasterImage img(heat.width_blocks, heat.height_blocks);
  for (std::size_t i = 0; i < heat.cells.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(heat.cells[i], 0.0, 1.0) * 255.0));
  }
  return encode_png(img);
}

}  // namespace mews
