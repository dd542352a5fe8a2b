#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mews/common.hpp"
#include "mews/digest.hpp"

namespace mews {

enum class EventKind {
  PostIngested,
  ImageAdded,
  FeaturesComputed,
  ForensicsComputed,
  EdgeAccepted,
  ClustersMerged,
  ObservationRecorded,
  AlertRaised,
};

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view name) noexcept;

struct Event {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::PostIngested;
  nlohmann::json payload;
  Instant at;
};

// Record framing: "<len> <crc32 as 8 hex> <json>\n", len and crc over the
// JSON bytes only.
std::string frame_event(const Event& event);

// Content-addressed files under <root>/<first 2 hex>/<hash>. Writes go
// through a temp file, fsync and rename, so a blob is either whole or absent.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  ContentHash put(ByteView bytes);
  bool contains(const ContentHash& hash) const;
  // Throws Error(NotFound).
  Bytes get(const ContentHash& hash) const;
  std::filesystem::path path_of(const ContentHash& hash) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

// Append-only event log split into segments events-<n>.jsonl of
// `segment_events` records each (n from 0).
class EventLog {
 public:
  enum class Mode { ReadWrite, ReadOnly };
  static constexpr std::uint64_t kSegmentEvents = 10000;

  // ReadWrite takes an exclusive lock on the directory and truncates a torn
  // final record; ReadOnly just ignores it. Non-trailing damage or a seq gap
  // throws Error(CorruptLog).
  explicit EventLog(std::filesystem::path dir, Mode mode = Mode::ReadWrite,
                    std::uint64_t segment_events = kSegmentEvents);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  // Assigns the next seq and writes the record (not yet fsynced).
  std::uint64_t append(EventKind kind, nlohmann::json payload, Instant at);
  // Appends an event whose seq is already assigned; it must be last_seq()+1.
  void append(const Event& event);
  void sync();

  std::uint64_t last_seq() const;
  // Events with seq > after, in order.
  std::vector<Event> read_from(std::uint64_t after) const;
  // Bytes dropped from a torn tail when the log was opened.
  std::size_t truncated_bytes() const noexcept { return truncated_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path segment_path(std::uint64_t index) const;
  void open_segment_for(std::uint64_t seq);

  std::filesystem::path dir_;
  Mode mode_;
  std::uint64_t segment_events_;
  mutable std::mutex mutex_;
  std::uint64_t last_seq_ = 0;
  std::size_t truncated_ = 0;
  int lock_fd_ = -1;
  int fd_ = -1;
  std::uint64_t fd_segment_ = 0;
  bool dirty_ = false;
};

// Full-state snapshots at snapshots/<seq>.snap, each a checksummed header
// line followed by the serialized state.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path dir);

  void write(std::uint64_t seq, std::string_view body);
  // Newest intact snapshot with seq <= max_seq; damaged files are skipped.
  std::optional<std::pair<std::uint64_t, std::string>> latest(std::uint64_t max_seq) const;
  std::vector<std::uint64_t> list() const;

 private:
  std::filesystem::path dir_;
};

// Writes `data` to `path` atomically (temp file in the same directory,
// fsync, rename, fsync of the directory).
void write_file_atomic(const std::filesystem::path& path, ByteView data);
Bytes read_file(const std::filesystem::path& path);

}  // namespace mews
