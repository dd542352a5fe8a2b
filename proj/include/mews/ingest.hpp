#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mews/common.hpp"
#include "mews/digest.hpp"

namespace mews {

struct MediaPost {
  std::string post_id;
  Platform platform = Platform::other;
  Instant timestamp;
  std::string text;
  std::vector<std::string> images;  // relative paths or data: URIs

  friend bool operator==(const MediaPost&, const MediaPost&) = default;
};

struct PostRef {
  Platform platform = Platform::other;
  std::string post_id;
  Instant timestamp;

  friend bool operator==(const PostRef&, const PostRef&) = default;
  friend bool operator<(const PostRef& a, const PostRef& b) {
    return std::tie(a.timestamp, a.platform, a.post_id) < std::tie(b.timestamp, b.platform, b.post_id);
  }
};

inline PostRef ref_of(const MediaPost& p) { return {p.platform, p.post_id, p.timestamp}; }

struct IngestItem {
  ContentHash content_hash;
  Instant first_seen;
  std::vector<PostRef> source_posts;  // sorted by timestamp
};

// Throws Error(MalformedLine | BadTimestamp | NoImages).
MediaPost parse_post_line(std::string_view line);

enum class DedupDecision { New, Seen };

// Content-hash keyed table of ingested images. dedupe() is the atomic
// check-and-insert point for concurrent ingest.
class DedupTable {
 public:
  DedupDecision dedupe(const ContentHash& hash, const PostRef& ref);

  bool contains(const ContentHash& hash) const;
  // Throws Error(UnknownImage).
  IngestItem get(const ContentHash& hash) const;
  std::size_t size() const;
  // Sorted by content hash.
  std::vector<IngestItem> items() const;

  void clear();
  void restore(IngestItem item);

 private:
  mutable std::mutex mutex_;
  std::map<ContentHash, IngestItem> items_;
};

// Resolves an image reference to raw bytes: a base64 data: URI, or a path
// relative to `media_root`. Absolute paths and paths escaping the root are
// rejected with Error(BadRequest); unreadable files with Error(Io).
Bytes load_image_payload(std::string_view ref, const std::filesystem::path& media_root);

// "data:image/png;base64,...." for tests and the corpus tool.
std::string data_uri(ByteView bytes, std::string_view mime = "application/octet-stream");

}  // namespace mews
