#include "mews/clusters.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

namespace mews {

ContentHash medoid(const std::vector<std::pair<ContentHash, PHash64>>& members) {
  if (members.empty()) throw Error(ErrorCode::UnknownCluster, "medoid of an empty cluster");
  const ContentHash* best = nullptr;
  long long best_cost = std::numeric_limits<long long>::max();
  for (const auto& [hash, phash] : members) {
    long long cost = 0;
    for (const auto& other : members) cost += hamming(phash, other.second);
    if (cost < best_cost || (cost == best_cost && hash < *best)) {
      best_cost = cost;
      best = &hash;
    }
  }
  return *best;
}

std::string ClusterSet::make_id(const ContentHash& hash) const {
  std::string id = "c" + hash.str().substr(0, 16);
  if (clusters_.count(id) != 0) id = "c" + hash.str();
  return id;
}

const std::string& ClusterSet::add_image(const ContentHash& hash, Instant first_seen) {
  if (const auto it = images_.find(hash); it != images_.end()) {
    return root_ids_[sets_.find(it->second.node)];
  }
  const std::uint32_t node = sets_.add();
  std::string id = make_id(hash);
  root_ids_.push_back(id);
  images_.emplace(hash, ImageInfo{node, PHash64{}, 0.0});
  Cluster cluster{id, {hash}, first_seen, false};
  const auto [it, inserted] = clusters_.emplace(id, std::move(cluster));
  return it->first;
}

void ClusterSet::restore_cluster(const Cluster& cluster) {
  if (cluster.members.empty()) throw Error(ErrorCode::UnknownCluster, fmt::format("cluster {} has no members", cluster.id));
  if (clusters_.count(cluster.id) != 0) throw Error(ErrorCode::DuplicateImage, fmt::format("cluster {} exists", cluster.id));
  std::optional<std::uint32_t> root;
  for (const auto& h : cluster.members) {
    if (images_.count(h) != 0) throw Error(ErrorCode::DuplicateImage, fmt::format("image {} already clustered", h.str()));
    const std::uint32_t node = sets_.add();
    root_ids_.push_back(cluster.id);
    images_.emplace(h, ImageInfo{node, PHash64{}, 0.0});
    if (root) sets_.unite_into(*root, node);
    else root = node;
  }
  clusters_.emplace(cluster.id, cluster);
}

void ClusterSet::set_phash(const ContentHash& hash, PHash64 phash) {
  const auto it = images_.find(hash);
  if (it == images_.end()) throw Error(ErrorCode::UnknownImage, hash.str());
  it->second.phash = phash;
}

void ClusterSet::set_verdict(const ContentHash& hash, double verdict) {
  const auto it = images_.find(hash);
  if (it == images_.end()) throw Error(ErrorCode::UnknownImage, hash.str());
  it->second.verdict = verdict;
  if (verdict >= params_.manipulated_threshold) {
    clusters_.at(root_ids_[sets_.find(it->second.node)]).manipulated = true;
  }
}

bool ClusterSet::contains(const ContentHash& hash) const { return images_.count(hash) != 0; }

const std::string& ClusterSet::cluster_of(const ContentHash& hash) const {
  const auto it = images_.find(hash);
  if (it == images_.end()) {
    throw Error(ErrorCode::UnknownImage, fmt::format("image {} has no cluster", hash.str()));
  }
  return root_ids_[sets_.find(it->second.node)];
}

const Cluster& ClusterSet::get(const std::string& id) const {
  const auto it = clusters_.find(id);
  if (it == clusters_.end()) throw Error(ErrorCode::UnknownCluster, fmt::format("unknown cluster {}", id));
  return it->second;
}

ClusterDelta ClusterSet::plan(const ContentHash& a, const ContentHash& b) const {
  ClusterDelta delta;
  delta.first = cluster_of(a);
  delta.second = cluster_of(b);
  if (delta.first == delta.second) {
    delta.survivor = delta.first;
    return delta;
  }
  delta.kind = ClusterDelta::Kind::Merged;
  const std::size_t size_first = clusters_.at(delta.first).members.size();
  const std::size_t size_second = clusters_.at(delta.second).members.size();
  if (size_first != size_second) {
    delta.survivor = size_first > size_second ? delta.first : delta.second;
  } else {
    delta.survivor = std::min(delta.first, delta.second);
  }
  return delta;
}

ClusterDelta ClusterSet::apply(const ContentHash& a, const ContentHash& b) {
  const ClusterDelta delta = plan(a, b);
  if (!delta.merged()) return delta;
  const std::string absorbed = delta.absorbed();
  Cluster& keep = clusters_.at(delta.survivor);
  Cluster& drop = clusters_.at(absorbed);

  const std::uint32_t keep_node = images_.at(*keep.members.begin()).node;
  const std::uint32_t drop_node = images_.at(*drop.members.begin()).node;
  // Union by size keeps trees shallow; the id follows the survivor either way.
  std::uint32_t root_keep = sets_.find(keep_node);
  std::uint32_t root_drop = sets_.find(drop_node);
  if (sets_.set_size(root_keep) < sets_.set_size(root_drop)) std::swap(root_keep, root_drop);
  sets_.unite_into(root_keep, root_drop);
  root_ids_[root_keep] = delta.survivor;

  keep.members.merge(drop.members);
  keep.created_at = std::min(keep.created_at, drop.created_at);
  keep.manipulated = keep.manipulated || drop.manipulated;
  clusters_.erase(absorbed);
  return delta;
}

ClusterDelta ClusterSet::apply_edge(const MatchEdge& edge) { return apply(edge.hash_a, edge.hash_b); }

ContentHash ClusterSet::representative(const std::string& id) const {
  const Cluster& cluster = get(id);
  std::vector<std::pair<ContentHash, PHash64>> members;
  members.reserve(cluster.members.size());
  for (const auto& h : cluster.members) members.emplace_back(h, images_.at(h).phash);
  return medoid(members);
}

bool ClusterSet::partition_ok() const {
  std::size_t total = 0;
  for (const auto& [id, cluster] : clusters_) {
    if (cluster.members.empty()) return false;
    total += cluster.members.size();
    for (const auto& h : cluster.members) {
      const auto it = images_.find(h);
      if (it == images_.end() || root_ids_[sets_.find(it->second.node)] != id) return false;
    }
  }
  return total == images_.size();
}

PHash64 ClusterSet::phash_of(const ContentHash& hash) const {
  const auto it = images_.find(hash);
  if (it == images_.end()) throw Error(ErrorCode::UnknownImage, hash.str());
  return it->second.phash;
}

double ClusterSet::verdict_of(const ContentHash& hash) const {
  const auto it = images_.find(hash);
  if (it == images_.end()) throw Error(ErrorCode::UnknownImage, hash.str());
  return it->second.verdict;
}

}  // namespace mews
