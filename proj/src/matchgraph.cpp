#include "mews/matchgraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "mews/digest.hpp"

namespace mews {

namespace {

struct Correspondence {
  double ax, ay, bx, by;
};

std::optional<Affine> fit_exact(const Correspondence& p, const Correspondence& q,
                                const Correspondence& r) {
  Eigen::Matrix3d m;
  m << p.ax, p.ay, 1.0, q.ax, q.ay, 1.0, r.ax, r.ay, 1.0;
  const double det = m.determinant();
  if (std::abs(det) < 1e-6) return std::nullopt;
  const Eigen::Matrix3d inv = m.inverse();
  const Eigen::Vector3d row_x = inv * Eigen::Vector3d(p.bx, q.bx, r.bx);
  const Eigen::Vector3d row_y = inv * Eigen::Vector3d(p.by, q.by, r.by);
  return Affine{row_x(0), row_x(1), row_x(2), row_y(0), row_y(1), row_y(2)};
}

std::optional<Affine> fit_least_squares(const std::vector<Correspondence>& pts,
                                        const std::vector<int>& idx) {
  if (idx.size() < 3) return std::nullopt;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(idx.size()), 3);
  Eigen::VectorXd bx(static_cast<Eigen::Index>(idx.size()));
  Eigen::VectorXd by(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& c = pts[static_cast<std::size_t>(idx[k])];
    const auto r = static_cast<Eigen::Index>(k);
    m(r, 0) = c.ax;
    m(r, 1) = c.ay;
    m(r, 2) = 1.0;
    bx(r) = c.bx;
    by(r) = c.by;
  }
  const auto qr = m.colPivHouseholderQr();
  if (qr.rank() < 3) return std::nullopt;
  const Eigen::Vector3d sx = qr.solve(bx);
  const Eigen::Vector3d sy = qr.solve(by);
  return Affine{sx(0), sx(1), sx(2), sy(0), sy(1), sy(2)};
}

std::vector<int> inliers_of(const Affine& model, const std::vector<Correspondence>& pts,
                            double threshold) {
  const double t2 = threshold * threshold;
  std::vector<int> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto [px, py] = model.apply(pts[i].ax, pts[i].ay);
    const double ex = px - pts[i].bx;
    const double ey = py - pts[i].by;
    if (ex * ex + ey * ey <= t2) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::uint64_t pair_seed(const ContentHash& a, const ContentHash& b) {
  const std::string joined = a.str() + b.str();
  const auto digest = sha256_raw(as_bytes(joined));
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed = (seed << 8) | digest[static_cast<std::size_t>(i)];
  return seed;
}

Box bounds(const std::vector<Correspondence>& pts, const std::vector<int>& idx, bool side_a) {
  Box box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
          std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
  for (int i : idx) {
    const auto& c = pts[static_cast<std::size_t>(i)];
    const int x = static_cast<int>(side_a ? c.ax : c.bx);
    const int y = static_cast<int>(side_a ? c.ay : c.by);
    box.x0 = std::min(box.x0, x);
    box.y0 = std::min(box.y0, y);
    box.x1 = std::max(box.x1, x);
    box.y1 = std::max(box.y1, y);
  }
  return box;
}

std::array<std::uint32_t, DescriptorIndex::kTables> keys_of(const Descriptor256& d) {
  std::array<std::uint32_t, DescriptorIndex::kTables> keys{};
  for (int t = 0; t < DescriptorIndex::kTables; ++t) keys[static_cast<std::size_t>(t)] = d.slice(t);
  return keys;
}

}  // namespace

std::vector<std::pair<int, int>> mutual_matches(const DescriptorSet& a, const DescriptorSet& b,
                                                int max_hamming) {
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  std::vector<std::pair<int, int>> out;
  if (na == 0 || nb == 0) return out;
  std::vector<int> best_for_a(na, -1);
  std::vector<int> dist_for_a(na, std::numeric_limits<int>::max());
  std::vector<int> best_for_b(nb, -1);
  std::vector<int> dist_for_b(nb, std::numeric_limits<int>::max());
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const int d = hamming(a[i].descriptor, b[j].descriptor);
      if (d < dist_for_a[i]) {
        dist_for_a[i] = d;
        best_for_a[i] = static_cast<int>(j);
      }
      if (d < dist_for_b[j]) {
        dist_for_b[j] = d;
        best_for_b[j] = static_cast<int>(i);
      }
    }
  }
  for (std::size_t i = 0; i < na; ++i) {
    const int j = best_for_a[i];
    if (j >= 0 && dist_for_a[i] <= max_hamming && best_for_b[static_cast<std::size_t>(j)] == static_cast<int>(i)) {
      out.emplace_back(static_cast<int>(i), j);
    }
  }
  return out;
}

std::optional<MatchEdge> verify_features(const FeatureRecord& first, const FeatureRecord& second,
                                         const MatchParams& params) {
  const bool swap = second.content_hash < first.content_hash;
  const FeatureRecord& a = swap ? second : first;
  const FeatureRecord& b = swap ? first : second;
  if (a.content_hash == b.content_hash) return std::nullopt;
  return verify_oriented(a, b, params);
}

std::optional<MatchEdge> verify_oriented(const FeatureRecord& a, const FeatureRecord& b,
                                         const MatchParams& params) {
  const auto matches = mutual_matches(a.descriptors, b.descriptors, params.max_hamming);
  if (static_cast<int>(matches.size()) < std::max(3, params.min_inliers)) return std::nullopt;

  std::vector<Correspondence> pts;
  pts.reserve(matches.size());
  for (const auto& [i, j] : matches) {
    const auto& ka = a.descriptors[static_cast<std::size_t>(i)].keypoint;
    const auto& kb = b.descriptors[static_cast<std::size_t>(j)].keypoint;
    pts.push_back({static_cast<double>(ka.x), static_cast<double>(ka.y), static_cast<double>(kb.x),
                   static_cast<double>(kb.y)});
  }

  std::mt19937_64 rng(pair_seed(a.content_hash, b.content_hash));
  const auto n = static_cast<std::uint64_t>(pts.size());
  std::optional<Affine> best_model;
  std::vector<int> best_inliers;
  for (int it = 0; it < params.ransac_iterations; ++it) {
    const auto i0 = rng() % n;
    auto i1 = rng() % (n - 1);
    if (i1 >= i0) ++i1;
    auto i2 = rng() % (n - 2);
    const auto lo = std::min(i0, i1);
    const auto hi = std::max(i0, i1);
    if (i2 >= lo) ++i2;
    if (i2 >= hi) ++i2;
    const auto model = fit_exact(pts[i0], pts[i1], pts[i2]);
    if (!model) continue;
    auto inl = inliers_of(*model, pts, params.reprojection_error);
    if (inl.size() > best_inliers.size()) {
      best_inliers = std::move(inl);
      best_model = model;
    }
  }
  if (!best_model) return std::nullopt;

  if (const auto refit = fit_least_squares(pts, best_inliers)) {
    auto inl = inliers_of(*refit, pts, params.reprojection_error);
    if (inl.size() >= best_inliers.size()) {
      best_inliers = std::move(inl);
      best_model = refit;
    }
  }
  if (static_cast<int>(best_inliers.size()) < params.min_inliers) return std::nullopt;

  MatchEdge edge;
  edge.hash_a = a.content_hash;
  edge.hash_b = b.content_hash;
  edge.raw_matches = static_cast<int>(matches.size());
  edge.inliers = static_cast<int>(best_inliers.size());
  edge.transform = *best_model;
  edge.score = std::min(1.0, edge.inliers / params.score_saturation);
  edge.region_a = bounds(pts, best_inliers, true);
  edge.region_b = bounds(pts, best_inliers, false);
  return edge;
}

std::pair<Box, Box> shared_region(const MatchEdge& edge, Size size_a, Size size_b, int margin) {
  auto grow = [margin](const Box& b, Size s) {
    return Box{std::max(0, b.x0 - margin), std::max(0, b.y0 - margin),
               std::min(s.width - 1, b.x1 + margin), std::min(s.height - 1, b.y1 + margin)};
  };
  return {grow(edge.region_a, size_a), grow(edge.region_b, size_b)};
}

void DescriptorIndex::insert(const ContentHash& hash, const DescriptorSet& descriptors, PHash64 phash) {
  std::unique_lock lock(mutex_);
  if (ids_.count(hash) != 0) {
    throw Error(ErrorCode::DuplicateImage, fmt::format("image {} already indexed", hash.str()));
  }
  const auto id = static_cast<std::uint32_t>(slots_.size());
  ImageSlot slot{hash, phash, {}, true};
  slot.keys.reserve(descriptors.size());
  for (std::size_t k = 0; k < descriptors.size(); ++k) {
    const auto keys = keys_of(descriptors[k].descriptor);
    for (int t = 0; t < kTables; ++t) {
      tables_[static_cast<std::size_t>(t)][keys[static_cast<std::size_t>(t)]].push_back(
          {id, static_cast<std::uint16_t>(k)});
    }
    slot.keys.push_back(keys);
  }
  slots_.push_back(std::move(slot));
  ids_.emplace(hash, id);
}

bool DescriptorIndex::remove(const ContentHash& hash) {
  std::unique_lock lock(mutex_);
  const auto it = ids_.find(hash);
  if (it == ids_.end()) return false;
  const std::uint32_t id = it->second;
  ImageSlot& slot = slots_[id];
  for (const auto& keys : slot.keys) {
    for (int t = 0; t < kTables; ++t) {
      auto& table = tables_[static_cast<std::size_t>(t)];
      const auto bucket = table.find(keys[static_cast<std::size_t>(t)]);
      if (bucket == table.end()) continue;
      auto& postings = bucket->second;
      postings.erase(std::remove_if(postings.begin(), postings.end(),
                                    [id](const Posting& p) { return p.image == id; }),
                     postings.end());
      if (postings.empty()) table.erase(bucket);
    }
  }
  slot.keys.clear();
  slot.live = false;
  ids_.erase(it);
  return true;
}

void DescriptorIndex::clear() {
  std::unique_lock lock(mutex_);
  for (auto& t : tables_) t.clear();
  slots_.clear();
  ids_.clear();
}

bool DescriptorIndex::contains(const ContentHash& hash) const {
  std::shared_lock lock(mutex_);
  return ids_.count(hash) != 0;
}

std::size_t DescriptorIndex::size() const {
  std::shared_lock lock(mutex_);
  return ids_.size();
}

std::size_t DescriptorIndex::bucket_entries(const ContentHash& hash) const {
  std::shared_lock lock(mutex_);
  const auto it = ids_.find(hash);
  if (it == ids_.end()) return 0;
  std::size_t n = 0;
  for (const auto& table : tables_) {
    for (const auto& [key, postings] : table) {
      n += static_cast<std::size_t>(std::count_if(postings.begin(), postings.end(),
                                                  [&](const Posting& p) { return p.image == it->second; }));
    }
  }
  return n;
}

std::vector<Candidate> DescriptorIndex::candidates_locked(
    const std::vector<std::array<std::uint32_t, kTables>>& keys, PHash64 phash,
    std::optional<std::uint32_t> exclude) const {
  std::vector<int> collisions(slots_.size(), 0);
  for (const auto& k : keys) {
    for (int t = 0; t < kTables; ++t) {
      const auto& table = tables_[static_cast<std::size_t>(t)];
      const auto bucket = table.find(k[static_cast<std::size_t>(t)]);
      if (bucket == table.end()) continue;
      for (const Posting& p : bucket->second) ++collisions[p.image];
    }
  }
  std::vector<Candidate> out;
  for (std::uint32_t id = 0; id < slots_.size(); ++id) {
    const ImageSlot& slot = slots_[id];
    if (!slot.live || (exclude && *exclude == id)) continue;
    const int pd = hamming(slot.phash, phash);
    if (collisions[id] >= params_.min_collisions || pd <= params_.max_phash_distance) {
      out.push_back({slot.hash, collisions[id], pd});
    }
  }
  std::sort(out.begin(), out.end(), [](const Candidate& x, const Candidate& y) {
    if (x.collisions != y.collisions) return x.collisions > y.collisions;
    return x.hash < y.hash;
  });
  return out;
}

std::vector<Candidate> DescriptorIndex::candidates(const DescriptorSet& descriptors, PHash64 phash,
                                                   const ContentHash* exclude) const {
  std::vector<std::array<std::uint32_t, kTables>> keys;
  keys.reserve(descriptors.size());
  for (const auto& e : descriptors) keys.push_back(keys_of(e.descriptor));
  std::shared_lock lock(mutex_);
  std::optional<std::uint32_t> ex;
  if (exclude) {
    if (const auto it = ids_.find(*exclude); it != ids_.end()) ex = it->second;
  }
  auto out = candidates_locked(keys, phash, ex);
  if (exclude) {
    std::erase_if(out, [&](const Candidate& c) { return c.hash == *exclude; });
  }
  return out;
}

std::vector<Candidate> DescriptorIndex::candidate_neighbors(const ContentHash& hash) const {
  std::shared_lock lock(mutex_);
  const auto it = ids_.find(hash);
  if (it == ids_.end()) {
    throw Error(ErrorCode::UnknownImage, fmt::format("image {} is not indexed", hash.str()));
  }
  const ImageSlot& slot = slots_[it->second];
  return candidates_locked(slot.keys, slot.phash, it->second);
}

}  // namespace mews
