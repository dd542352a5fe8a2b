#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mews/common.hpp"
#include "mews/disjoint_sets.hpp"
#include "mews/features.hpp"
#include "mews/matchgraph.hpp"

namespace mews {

struct ClusterParams {
  double manipulated_threshold = 0.5;
};

struct Cluster {
  std::string id;
  std::set<ContentHash> members;
  Instant created_at;
  bool manipulated = false;
};

// Result of feeding one edge to the cluster state.
struct ClusterDelta {
  enum class Kind { NoChange, Merged };
  Kind kind = Kind::NoChange;
  std::string first;     // cluster of edge.hash_a before the merge
  std::string second;    // cluster of edge.hash_b before the merge
  std::string survivor;  // id carried by the merged cluster

  bool merged() const noexcept { return kind == Kind::Merged; }
  std::string absorbed() const { return survivor == first ? second : first; }
};

// Connected components over accepted edges. Every registered image starts as
// a singleton whose id derives from its content hash; a merge keeps the id of
// the larger side (ties: lexicographically smaller id).
class ClusterSet {
 public:
  explicit ClusterSet(ClusterParams params = {}) : params_(params) {}

  // Re-creates a cluster from a snapshot; none of its members may be
  // registered yet.
  void restore_cluster(const Cluster& cluster);

  // No-op when the image is already registered.
  const std::string& add_image(const ContentHash& hash, Instant first_seen);
  void set_phash(const ContentHash& hash, PHash64 phash);
  void set_verdict(const ContentHash& hash, double verdict);

  bool contains(const ContentHash& hash) const;
  bool has_cluster(const std::string& id) const { return clusters_.count(id) != 0; }
  // Throws Error(UnknownImage).
  const std::string& cluster_of(const ContentHash& hash) const;
  // Throws Error(UnknownCluster).
  const Cluster& get(const std::string& id) const;
  const std::map<std::string, Cluster>& clusters() const noexcept { return clusters_; }
  std::size_t image_count() const noexcept { return images_.size(); }

  // What apply_edge would do, without mutating.
  ClusterDelta plan(const ContentHash& a, const ContentHash& b) const;
  ClusterDelta apply_edge(const MatchEdge& edge);
  ClusterDelta apply(const ContentHash& a, const ContentHash& b);

  // Medoid by perceptual-hash Hamming distance; ties to the smallest hash.
  ContentHash representative(const std::string& id) const;

  // Every image in exactly one cluster and member counts add up.
  bool partition_ok() const;

  PHash64 phash_of(const ContentHash& hash) const;
  double verdict_of(const ContentHash& hash) const;

 private:
  struct ImageInfo {
    std::uint32_t node;
    PHash64 phash;
    double verdict = 0.0;
  };

  std::string make_id(const ContentHash& hash) const;

  ClusterParams params_;
  DisjointSets<std::uint32_t> sets_;
  std::vector<std::string> root_ids_;  // cluster id per union-find root
  std::unordered_map<ContentHash, ImageInfo> images_;
  std::map<std::string, Cluster> clusters_;
};

ContentHash medoid(const std::vector<std::pair<ContentHash, PHash64>>& members);

}  // namespace mews
