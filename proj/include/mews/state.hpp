#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mews/clusters.hpp"
#include "mews/features.hpp"
#include "mews/forensics.hpp"
#include "mews/ingest.hpp"
#include "mews/json_io.hpp"
#include "mews/matchgraph.hpp"
#include "mews/store.hpp"
#include "mews/trends.hpp"

namespace mews {

struct StateParams {
  ClusterParams clusters;
  TrendParams trends;
  IndexParams index;
};

struct ImageRecord {
  ContentHash hash;
  std::uint64_t added_seq = 0;
  Instant first_seen;
  std::string format;  // "png" | "jpeg"
  std::size_t byte_size = 0;
  std::optional<FeatureRecord> features;
  ContentHash descriptor_blob;
  std::optional<ManipulationReport> forensics;

  // Images are complete once forensics are recorded, which the pipeline
  // does after features and edges.
  bool complete() const noexcept { return forensics.has_value(); }
};

// A post as stored: `post.images` holds content hashes, not payload refs.
struct PostRecord {
  MediaPost post;
  std::uint64_t seq = 0;
  bool observed = false;
};

using PostKey = std::pair<Platform, std::string>;
using EdgeKey = std::pair<ContentHash, ContentHash>;

// Payload builders; State::apply is their only reader.
namespace events {
Json post_ingested(const MediaPost& post_with_hashes);
Json image_added(const ContentHash& hash, Instant first_seen, std::string_view format, std::size_t byte_size);
Json features_computed(const FeatureRecord& record, const ContentHash& descriptor_blob);
Json forensics_computed(const ManipulationReport& report);
Json edge_accepted(const MatchEdge& edge);
Json clusters_merged(const ContentHash& a, const ContentHash& b, const ClusterDelta& delta);
Json observation_recorded(const PostRef& ref, const std::vector<std::string>& clusters);
Json alert_raised(const TrendAlert& alert);
}  // namespace events

// The in-memory aggregate of everything in the event log. apply() is the
// only mutator apart from the derived caches (descriptor index, the trend
// tracker's dirty set).
class State {
 public:
  explicit State(StateParams params = {});
  State(const State&) = delete;
  State& operator=(const State&) = delete;

  // Throws Error(CorruptLog) when the event does not fit the current state.
  void apply(const Event& event, const BlobStore& blobs);

  // Canonical, order-independent document of the full state.
  Json to_json() const;
  std::string serialize() const { return to_json().dump(); }
  // Replaces the state with a snapshot document.
  void load(const Json& doc, const BlobStore& blobs);

  void rebuild_index();
  // Alerts due at the current watermark that have not been raised yet.
  std::vector<TrendAlert> due_alerts();

  std::uint64_t last_seq() const noexcept { return last_seq_; }
  std::optional<Instant> watermark() const noexcept { return watermark_; }
  const StateParams& params() const noexcept { return params_; }

  const std::map<PostKey, PostRecord>& posts() const noexcept { return posts_; }
  const DedupTable& dedup() const noexcept { return dedup_; }
  const std::map<ContentHash, ImageRecord>& images() const noexcept { return images_; }
  const ImageRecord* image(const ContentHash& hash) const;
  const std::map<EdgeKey, MatchEdge>& edges() const noexcept { return edges_; }
  // Edges touching `hash`, ordered by score descending then other hash.
  std::vector<const MatchEdge*> edges_of(const ContentHash& hash) const;
  const ClusterSet& clusters() const noexcept { return clusters_; }
  const TrendTracker& trends() const noexcept { return trends_; }
  const DescriptorIndex& index() const noexcept { return index_; }

  // Post count per platform over the source posts of a cluster's members.
  std::map<Platform, int> platform_counts(const std::string& cluster_id) const;

 private:
  void reset();
  [[noreturn]] void corrupt(const Event& event, const std::string& why) const;

  StateParams params_;
  std::uint64_t last_seq_ = 0;
  std::optional<Instant> watermark_;
  std::map<PostKey, PostRecord> posts_;
  DedupTable dedup_;
  std::map<ContentHash, ImageRecord> images_;
  std::map<EdgeKey, MatchEdge> edges_;
  std::map<ContentHash, std::vector<ContentHash>> adjacency_;
  ClusterSet clusters_;
  TrendTracker trends_;
  DescriptorIndex index_;
};

}  // namespace mews
