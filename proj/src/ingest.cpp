#include "mews/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace mews {

namespace {

const nlohmann::json& require(const nlohmann::json& obj, const char* key, bool (nlohmann::json::*is)() const noexcept,
                              const char* what) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::MalformedLine, fmt::format("missing field '{}'", key));
  if (!((*it).*is)()) throw Error(ErrorCode::MalformedLine, fmt::format("field '{}' must be {}", key, what));
  return *it;
}

}  // namespace

MediaPost parse_post_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedLine, fmt::format("not JSON: {}", e.what()));
  }
  if (!j.is_object()) throw Error(ErrorCode::MalformedLine, "post must be a JSON object");

  MediaPost post;
  post.post_id = require(j, "post_id", &nlohmann::json::is_string, "a string").get<std::string>();
  if (post.post_id.empty()) throw Error(ErrorCode::MalformedLine, "post_id is empty");
  post.platform = parse_platform(require(j, "platform", &nlohmann::json::is_string, "a string").get<std::string>());
  const auto ts = require(j, "timestamp", &nlohmann::json::is_string, "a string").get<std::string>();
  post.text = require(j, "text", &nlohmann::json::is_string, "a string").get<std::string>();
  const auto& images = require(j, "images", &nlohmann::json::is_array, "an array");
  for (const auto& img : images) {
    if (!img.is_string()) throw Error(ErrorCode::MalformedLine, "images must be strings");
    post.images.push_back(img.get<std::string>());
  }

  const auto parsed = parse_rfc3339(ts);
  if (!parsed) throw Error(ErrorCode::BadTimestamp, fmt::format("unparseable timestamp '{}'", ts));
  post.timestamp = *parsed;
  if (post.images.empty()) throw Error(ErrorCode::NoImages, fmt::format("post {} has no images", post.post_id));
  return post;
}

DedupDecision DedupTable::dedupe(const ContentHash& hash, const PostRef& ref) {
  std::lock_guard lock(mutex_);
  auto [it, inserted] = items_.try_emplace(hash);
  IngestItem& item = it->second;
  if (inserted) {
    item.content_hash = hash;
    item.first_seen = ref.timestamp;
    item.source_posts.push_back(ref);
    return DedupDecision::New;
  }
  auto& refs = item.source_posts;
  const auto pos = std::lower_bound(refs.begin(), refs.end(), ref);
  if (pos == refs.end() || !(*pos == ref)) refs.insert(pos, ref);
  item.first_seen = refs.front().timestamp;
  return DedupDecision::Seen;
}

bool DedupTable::contains(const ContentHash& hash) const {
  std::lock_guard lock(mutex_);
  return items_.count(hash) != 0;
}

IngestItem DedupTable::get(const ContentHash& hash) const {
  std::lock_guard lock(mutex_);
  const auto it = items_.find(hash);
  if (it == items_.end()) throw Error(ErrorCode::UnknownImage, fmt::format("unknown image {}", hash.str()));
  return it->second;
}

std::size_t DedupTable::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

std::vector<IngestItem> DedupTable::items() const {
  std::lock_guard lock(mutex_);
  std::vector<IngestItem> out;
  out.reserve(items_.size());
  for (const auto& [h, item] : items_) out.push_back(item);
  return out;
}

void DedupTable::clear() {
  std::lock_guard lock(mutex_);
  items_.clear();
}

void DedupTable::restore(IngestItem item) {
  std::lock_guard lock(mutex_);
  std::sort(item.source_posts.begin(), item.source_posts.end());
  const ContentHash hash = item.content_hash;
  items_[hash] = std::move(item);
}

Bytes load_image_payload(std::string_view ref, const std::filesystem::path& media_root) {
  namespace fs = std::filesystem;
  if (ref.rfind("data:", 0) == 0) {
    const auto comma = ref.find(',');
    if (comma == std::string_view::npos) throw Error(ErrorCode::BadRequest, "data URI without payload");
    const auto meta = ref.substr(5, comma - 5);
    if (meta.size() < 7 || meta.substr(meta.size() - 7) != ";base64") {
      throw Error(ErrorCode::BadRequest, "only base64 data URIs are supported");
    }
    return base64_decode(ref.substr(comma + 1));
  }

  const fs::path rel(std::string{ref});
  if (ref.empty() || rel.is_absolute() || rel.has_root_name()) {
    throw Error(ErrorCode::BadRequest, fmt::format("image path must be relative: '{}'", ref));
  }
  const fs::path normal = rel.lexically_normal();
  if (!normal.empty() && *normal.begin() == "..") {
    throw Error(ErrorCode::BadRequest, fmt::format("image path escapes the media root: '{}'", ref));
  }
  const fs::path full = media_root / normal;
  std::ifstream in(full, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot read {}", full.string()));
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string data_uri(ByteView bytes, std::string_view mime) {
  return fmt::format("data:{};base64,{}", mime, base64_encode(bytes));
}

}  // namespace mews
