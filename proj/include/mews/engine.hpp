#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mews/features.hpp"
#include "mews/forensics.hpp"
#include "mews/json_io.hpp"
#include "mews/matchgraph.hpp"
#include "mews/state.hpp"
#include "mews/store.hpp"

namespace mews {

struct EngineConfig {
  std::filesystem::path data_root = "mews-data";
  std::filesystem::path media_root = ".";
  FeatureParams features;
  ForensicsParams forensics;
  MatchParams match;
  StateParams state;
  std::size_t queue_depth = 256;
  unsigned workers = 0;  // 0: hardware concurrency
  std::size_t max_upload_bytes = 10u << 20;
  std::uint64_t snapshot_every = 10000;
  std::uint64_t segment_events = EventLog::kSegmentEvents;
  std::string cors_origin = "*";
  std::filesystem::path ui_root;  // static files served under /ui/ when set

  // Overlays the keys present in `doc` onto `base`. Unknown keys and bad
  // values throw Error(Config).
  static EngineConfig from_json(const Json& doc, EngineConfig base);
  static EngineConfig from_json(const Json& doc) { return from_json(doc, EngineConfig{}); }
  static EngineConfig load(const std::filesystem::path& file, EngineConfig base);
  static EngineConfig load(const std::filesystem::path& file) { return load(file, EngineConfig{}); }
  Json to_json() const;
};

struct IngestIssue {
  std::size_t line = 0;
  std::string code;
  std::string message;
};

struct IngestReport {
  std::size_t accepted = 0;
  std::size_t duplicates = 0;
  std::size_t rejected = 0;
  std::size_t new_images = 0;
  std::vector<IngestIssue> issues;
};

struct RelatedMatch {
  ContentHash content_hash;
  int inliers = 0;
  double score = 0;
  Box region_query;
  Box region_match;
  std::string cluster_id;
};

struct RelatedImagesResult {
  ContentHash query_hash;
  std::vector<RelatedMatch> matches;  // score descending
  bool persisted = false;
};

Json to_json(const RelatedImagesResult& r);

enum class ClusterSort { size, recent };

// The pipeline bound to one data root: ingest, query and the read documents
// served over HTTP. Writes are serialized; reads share a lock.
class Engine {
 public:
  // ReadOnly opens without taking the writer lock and never appends.
  explicit Engine(EngineConfig config, EventLog::Mode mode = EventLog::Mode::ReadWrite);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const noexcept { return config_; }

  // JSONL feed; malformed lines are reported and skipped. Image references
  // resolve against `media_root` (config media_root when empty).
  IngestReport ingest(std::istream& feed, const std::filesystem::path& media_root = {});
  IngestReport ingest_lines(const std::vector<std::string>& lines, const std::filesystem::path& media_root = {});

  // Throws Error(PayloadTooLarge | UnsupportedFormat | CorruptImage | TooSmall).
  // With persist, the image is ingested as an upload post at `at` (wall clock
  // when absent).
  RelatedImagesResult query_upload(ByteView bytes, bool persist, std::optional<Instant> at = std::nullopt);

  // Read documents. Unknown ids throw Error(NotFound).
  Json graph(const std::optional<std::string>& cluster_id = std::nullopt) const;
  Json cluster_summary(const std::string& cluster_id) const;
  Json clusters(ClusterSort sort, std::size_t limit, std::size_t offset) const;
  Json cluster_detail(const std::string& cluster_id) const;
  Json image_detail(const ContentHash& hash) const;
  Bytes heatmap_png(const ContentHash& hash) const;
  Bytes blob(const ContentHash& hash) const;
  // MIME type of the stored original.
  std::string media_type(const ContentHash& hash) const;
  Json alerts(Instant since) const;
  Json search(std::string_view query) const;
  Json health() const;

  std::string serialized_state() const;
  void rebuild_index();
  std::uint64_t last_seq() const;
  void snapshot_now();

  // Direct state access for tests and tools; hold no references across writes.
  const State& state() const noexcept { return state_; }

 private:
  struct Prepared;
  struct PreparedImage;

  Prepared prepare(std::string line, std::size_t line_no, const std::filesystem::path& media_root) const;
  PreparedImage analyze(ContentHash hash, Bytes bytes) const;
  void commit(Prepared& job, IngestReport& report);
  void commit_post(const MediaPost& post, std::vector<PreparedImage>& images);
  void add_image(PreparedImage& img, Instant at);
  void link(const ContentHash& hash, Instant at);
  void observe(const PostRecord& rec);
  void raise_alerts();
  void finish_commit();
  void recover();
  void emit(EventKind kind, Json payload, Instant at);
  Json summary_locked(const std::string& cluster_id) const;

  EngineConfig config_;
  EventLog::Mode mode_;
  AnnotatorRegistry annotators_;
  BlobStore blobs_;
  std::unique_ptr<EventLog> log_;
  SnapshotStore snapshots_;
  State state_;
  mutable std::shared_mutex mutex_;
  std::uint64_t last_snapshot_ = 0;

  class Pool;
  std::unique_ptr<Pool> pool_;
};

}  // namespace mews
