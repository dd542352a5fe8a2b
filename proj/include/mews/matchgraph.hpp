#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mews/common.hpp"
#include "mews/features.hpp"

namespace mews {

struct MatchParams {
  int max_hamming = 48;
  int ransac_iterations = 200;
  double reprojection_error = 5.0;
  int min_inliers = 12;
  double score_saturation = 50.0;
};

// x' = a x + b y + tx,  y' = c x + d y + ty
struct Affine {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;

  std::pair<double, double> apply(double x, double y) const noexcept {
    return {a * x + b * y + tx, c * x + d * y + ty};
  }
  friend bool operator==(const Affine&, const Affine&) = default;
};

// Verified similarity link. hash_a < hash_b; `transform` maps image-a pixel
// coordinates onto image b; regions bound the inlier keypoints.
struct MatchEdge {
  ContentHash hash_a;
  ContentHash hash_b;
  int raw_matches = 0;
  int inliers = 0;
  Affine transform;
  double score = 0.0;
  Box region_a;
  Box region_b;
  std::string type = "descriptor";

  friend bool operator==(const MatchEdge&, const MatchEdge&) = default;
};

// Mutual nearest neighbours at Hamming <= max_hamming, ties to the lower
// index. Pairs are (index in a, index in b).
std::vector<std::pair<int, int>> mutual_matches(const DescriptorSet& a, const DescriptorSet& b,
                                                int max_hamming);

// Geometric verification of two feature records. Order of the arguments does
// not matter: the pair is canonicalized by content hash first, and RANSAC is
// seeded from SHA-256(hash_a || hash_b).
std::optional<MatchEdge> verify_features(const FeatureRecord& a, const FeatureRecord& b,
                                         const MatchParams& params = {});

// Verification with `a` taken as the first image as given: no reordering
// and no rejection of identical hashes. Used for query images.
std::optional<MatchEdge> verify_oriented(const FeatureRecord& a, const FeatureRecord& b,
                                         const MatchParams& params = {});

// Edge regions grown by `margin` and clamped to the image extents.
std::pair<Box, Box> shared_region(const MatchEdge& edge, Size size_a, Size size_b, int margin = 8);

struct IndexParams {
  int min_collisions = 3;
  int max_phash_distance = 10;
};

struct Candidate {
  ContentHash hash;
  int collisions = 0;
  int phash_distance = 64;
};

// Hamming LSH over 256-bit descriptors: table t is keyed by bits
// [32t, 32t + 32). A separate table keeps each image's perceptual hash.
// Readers may run concurrently; writers are exclusive.
class DescriptorIndex {
 public:
  static constexpr int kTables = 8;

  explicit DescriptorIndex(IndexParams params = {}) : params_(params) {}
  DescriptorIndex(const DescriptorIndex&) = delete;
  DescriptorIndex& operator=(const DescriptorIndex&) = delete;

  // Throws Error(DuplicateImage) if the hash is already indexed.
  void insert(const ContentHash& hash, const DescriptorSet& descriptors, PHash64 phash);
  bool remove(const ContentHash& hash);
  void clear();

  bool contains(const ContentHash& hash) const;
  std::size_t size() const;
  std::size_t bucket_entries(const ContentHash& hash) const;

  // Images with >= min_collisions bucket collisions or phash distance <=
  // max_phash_distance, excluding `exclude`. Ordered by collisions
  // descending, then hash ascending.
  std::vector<Candidate> candidates(const DescriptorSet& descriptors, PHash64 phash,
                                    const ContentHash* exclude = nullptr) const;

  // Throws Error(UnknownImage) if the hash is not indexed.
  std::vector<Candidate> candidate_neighbors(const ContentHash& hash) const;

  const IndexParams& params() const noexcept { return params_; }

 private:
  struct Posting {
    std::uint32_t image;
    std::uint16_t ordinal;
  };
  struct ImageSlot {
    ContentHash hash;
    PHash64 phash;
    std::vector<std::array<std::uint32_t, kTables>> keys;
    bool live = true;
  };

  std::vector<Candidate> candidates_locked(const std::vector<std::array<std::uint32_t, kTables>>& keys,
                                           PHash64 phash, std::optional<std::uint32_t> exclude) const;

  IndexParams params_;
  std::array<std::unordered_map<std::uint32_t, std::vector<Posting>>, kTables> tables_;
  std::vector<ImageSlot> slots_;
  std::unordered_map<ContentHash, std::uint32_t> ids_;
  mutable std::shared_mutex mutex_;
};

}  // namespace mews
