#include "mews/engine.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mews/bounded_queue.hpp"
#include "mews/codec.hpp"

namespace mews {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// configuration

namespace {

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, std::string_view section) {
  if (!obj.is_object()) throw Error(ErrorCode::Config, fmt::format("config section '{}' must be an object", section));
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::Config, fmt::format("unknown config key '{}{}'", section.empty() ? "" : fmt::format("{}.", section), key));
    }
  }
}

template <typename T>
void take(const Json& obj, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::Config, fmt::format("config key '{}' has the wrong type", key));
  }
}

template <typename T>
void positive(T value, const char* key) {
  if (!(value > T{})) throw Error(ErrorCode::Config, fmt::format("config key '{}' must be positive", key));
}

Instant wall_clock_now() { return std::chrono::floor<Seconds>(std::chrono::system_clock::now()); }

std::string_view format_name(ImageFormat f) {
  switch (f) {
    case ImageFormat::png:
      return "png";
    case ImageFormat::jpeg:
      return "jpeg";
    default:
      return "unknown";
  }
}

}  // namespace

EngineConfig EngineConfig::from_json(const Json& doc, EngineConfig c) {
  check_keys(doc,
             {"data_root", "media_root", "queue_depth", "workers", "max_upload_bytes", "snapshot_every",
              "segment_events", "cors_origin", "ui_root", "features", "index", "match", "forensics", "clusters",
              "trends"},
             "");
  std::string path;
  if (doc.contains("data_root")) { take(doc, "data_root", path); c.data_root = path; }
  if (doc.contains("media_root")) { take(doc, "media_root", path); c.media_root = path; }
  if (doc.contains("ui_root")) { take(doc, "ui_root", path); c.ui_root = path; }
  take(doc, "queue_depth", c.queue_depth);
  take(doc, "workers", c.workers);
  take(doc, "max_upload_bytes", c.max_upload_bytes);
  take(doc, "snapshot_every", c.snapshot_every);
  take(doc, "segment_events", c.segment_events);
  take(doc, "cors_origin", c.cors_origin);
  positive(c.queue_depth, "queue_depth");
  positive(c.max_upload_bytes, "max_upload_bytes");
  positive(c.snapshot_every, "snapshot_every");
  positive(c.segment_events, "segment_events");

  if (const auto it = doc.find("features"); it != doc.end()) {
    check_keys(*it, {"fast_threshold", "max_keypoints"}, "features");
    take(*it, "fast_threshold", c.features.fast_threshold);
    take(*it, "max_keypoints", c.features.max_keypoints);
    positive(c.features.max_keypoints, "features.max_keypoints");
  }
  if (const auto it = doc.find("index"); it != doc.end()) {
    check_keys(*it, {"min_collisions", "max_phash_distance"}, "index");
    take(*it, "min_collisions", c.state.index.min_collisions);
    take(*it, "max_phash_distance", c.state.index.max_phash_distance);
    positive(c.state.index.min_collisions, "index.min_collisions");
  }
  if (const auto it = doc.find("match"); it != doc.end()) {
    check_keys(*it, {"max_hamming", "ransac_iterations", "reprojection_error", "min_inliers", "score_saturation"},
               "match");
    take(*it, "max_hamming", c.match.max_hamming);
    take(*it, "ransac_iterations", c.match.ransac_iterations);
    take(*it, "reprojection_error", c.match.reprojection_error);
    take(*it, "min_inliers", c.match.min_inliers);
    take(*it, "score_saturation", c.match.score_saturation);
    positive(c.match.ransac_iterations, "match.ransac_iterations");
    positive(c.match.min_inliers, "match.min_inliers");
    positive(c.match.score_saturation, "match.score_saturation");
  }
  if (const auto it = doc.find("forensics"); it != doc.end()) {
    check_keys(*it,
               {"jpeg_quality", "block_size", "support_saturation", "hot_cell_threshold", "hot_fraction_saturation",
                "copy_move"},
               "forensics");
    auto& f = c.forensics;
    take(*it, "jpeg_quality", f.jpeg_quality);
    take(*it, "block_size", f.block_size);
    take(*it, "support_saturation", f.support_saturation);
    take(*it, "hot_cell_threshold", f.hot_cell_threshold);
    take(*it, "hot_fraction_saturation", f.hot_fraction_saturation);
    if (f.jpeg_quality < 1 || f.jpeg_quality > 100) throw Error(ErrorCode::Config, "forensics.jpeg_quality must be 1..100");
    positive(f.block_size, "forensics.block_size");
    positive(f.support_saturation, "forensics.support_saturation");
    positive(f.hot_fraction_saturation, "forensics.hot_fraction_saturation");
    if (const auto cm = it->find("copy_move"); cm != it->end()) {
      check_keys(*cm, {"max_hamming", "min_distance", "offset_tolerance", "min_support"}, "forensics.copy_move");
      take(*cm, "max_hamming", f.copy_move.max_hamming);
      take(*cm, "min_distance", f.copy_move.min_distance);
      take(*cm, "offset_tolerance", f.copy_move.offset_tolerance);
      take(*cm, "min_support", f.copy_move.min_support);
      positive(f.copy_move.min_support, "forensics.copy_move.min_support");
    }
  }
  if (const auto it = doc.find("clusters"); it != doc.end()) {
    check_keys(*it, {"manipulated_threshold"}, "clusters");
    take(*it, "manipulated_threshold", c.state.clusters.manipulated_threshold);
  }
  if (const auto it = doc.find("trends"); it != doc.end()) {
    check_keys(*it, {"window_seconds", "baseline_windows", "min_count", "z_threshold", "sigma_floor", "novelty_days"},
               "trends");
    auto& t = c.state.trends;
    long long window = t.window.count();
    long long novelty_days = t.novelty.count() / 86400;
    take(*it, "window_seconds", window);
    take(*it, "baseline_windows", t.baseline_windows);
    take(*it, "min_count", t.min_count);
    take(*it, "z_threshold", t.z_threshold);
    take(*it, "sigma_floor", t.sigma_floor);
    take(*it, "novelty_days", novelty_days);
    positive(window, "trends.window_seconds");
    positive(t.baseline_windows, "trends.baseline_windows");
    positive(t.sigma_floor, "trends.sigma_floor");
    t.window = Seconds{window};
    if (it->contains("novelty_days")) t.novelty = Seconds{novelty_days * 86400};
  }
  return c;
}

EngineConfig EngineConfig::load(const fs::path& file, EngineConfig base) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Config, fmt::format("cannot read config {}", file.string()));
  Json doc;
  try {
    doc = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::Config, fmt::format("config {}: {}", file.string(), e.what()));
  }
  return from_json(doc, std::move(base));
}

Json EngineConfig::to_json() const {
  const auto& f = forensics;
  const auto& t = state.trends;
  return Json{
      {"data_root", data_root.string()},
      {"media_root", media_root.string()},
      {"ui_root", ui_root.string()},
      {"queue_depth", queue_depth},
      {"workers", workers},
      {"max_upload_bytes", max_upload_bytes},
      {"snapshot_every", snapshot_every},
      {"segment_events", segment_events},
      {"cors_origin", cors_origin},
      {"features", {{"fast_threshold", features.fast_threshold}, {"max_keypoints", features.max_keypoints}}},
      {"index",
       {{"min_collisions", state.index.min_collisions}, {"max_phash_distance", state.index.max_phash_distance}}},
      {"match",
       {{"max_hamming", match.max_hamming},
        {"ransac_iterations", match.ransac_iterations},
        {"reprojection_error", match.reprojection_error},
        {"min_inliers", match.min_inliers},
        {"score_saturation", match.score_saturation}}},
      {"forensics",
       {{"jpeg_quality", f.jpeg_quality},
        {"block_size", f.block_size},
        {"support_saturation", f.support_saturation},
        {"hot_cell_threshold", f.hot_cell_threshold},
        {"hot_fraction_saturation", f.hot_fraction_saturation},
        {"copy_move",
         {{"max_hamming", f.copy_move.max_hamming},
          {"min_distance", f.copy_move.min_distance},
          {"offset_tolerance", f.copy_move.offset_tolerance},
          {"min_support", f.copy_move.min_support}}}}},
      {"clusters", {{"manipulated_threshold", state.clusters.manipulated_threshold}}},
      {"trends",
       {{"window_seconds", t.window.count()},
        {"baseline_windows", t.baseline_windows},
        {"min_count", t.min_count},
        {"z_threshold", t.z_threshold},
        {"sigma_floor", t.sigma_floor},
        {"novelty_days", t.novelty.count() / 86400}}},
  };
}

Json to_json(const RelatedImagesResult& r) {
  Json matches = Json::array();
  for (const auto& m : r.matches) {
    matches.push_back(Json{{"content_hash", m.content_hash},
                           {"inliers", m.inliers},
                           {"score", m.score},
                           {"region_query", m.region_query},
                           {"region_match", m.region_match},
                           {"cluster_id", m.cluster_id}});
  }
  return Json{{"query_hash", r.query_hash}, {"matches", std::move(matches)}, {"persisted", r.persisted}};
}

// ---------------------------------------------------------------------------
// worker pool

class Engine::Pool {
 public:
  explicit Pool(unsigned n) {
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    for (unsigned i = 0; i < n; ++i) threads_.emplace_back([this] { run(); });
  }

  ~Pool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  template <typename F>
  auto submit(F f) -> std::future<decltype(f())> {
    auto task = std::make_shared<std::packaged_task<decltype(f())()>>(std::move(f));
    auto fut = task->get_future();
    {
      std::lock_guard lock(mutex_);
      tasks_.emplace_back([task] { (*task)(); });
    }
    cv_.notify_one();
    return fut;
  }

 private:
  void run() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || !tasks_.empty(); });
        if (tasks_.empty()) return;
        task = std::move(tasks_.front());
        tasks_.pop_front();
      }
      task();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  bool stop_ = false;
};

// ---------------------------------------------------------------------------
// pipeline

struct Engine::PreparedImage {
  ContentHash hash;
  Bytes bytes;
  std::string format;
  bool known = false;  // already fully processed when prepared
  std::optional<FeatureRecord> features;
  std::optional<ManipulationReport> forensics;
  std::optional<Error> error;
};

struct Engine::Prepared {
  std::size_t line = 0;
  std::optional<MediaPost> post;
  std::vector<PreparedImage> images;
  std::optional<Error> error;
};

Engine::Engine(EngineConfig config, EventLog::Mode mode)
    : config_(std::move(config)),
      mode_(mode),
      annotators_(AnnotatorRegistry::with_builtins()),
      blobs_(config_.data_root / "blobs"),
      log_(std::make_unique<EventLog>(config_.data_root / "log", mode, config_.segment_events)),
      snapshots_(config_.data_root / "snapshots"),
      state_(config_.state),
      pool_(std::make_unique<Pool>(config_.workers)) {
  if (log_->truncated_bytes() > 0) {
    spdlog::warn("event log: dropped {} bytes of a torn final record", log_->truncated_bytes());
  }
  if (auto snap = snapshots_.latest(log_->last_seq())) {
    state_.load(Json::parse(snap->second), blobs_);
    if (state_.last_seq() != snap->first) {
      throw Error(ErrorCode::CorruptLog, fmt::format("snapshot {} records seq {}", snap->first, state_.last_seq()));
    }
    last_snapshot_ = snap->first;
  }
  for (const auto& ev : log_->read_from(state_.last_seq())) state_.apply(ev, blobs_);
  if (mode_ == EventLog::Mode::ReadWrite) recover();
}

Engine::~Engine() = default;

std::uint64_t Engine::last_seq() const {
  std::shared_lock lock(mutex_);
  return state_.last_seq();
}

void Engine::emit(EventKind kind, Json payload, Instant at) {
  const std::uint64_t seq = log_->append(kind, payload, at);
  state_.apply(Event{seq, kind, std::move(payload), at}, blobs_);
}

Engine::PreparedImage Engine::analyze(ContentHash hash, Bytes bytes) const {
  PreparedImage out;
  out.hash = std::move(hash);
  {
    std::shared_lock lock(mutex_);
    const ImageRecord* img = state_.image(out.hash);
    if (img != nullptr && img->complete()) {
      out.known = true;
      return out;
    }
  }
  try {
    out.format = format_name(sniff_format(bytes));
    const RasterImage raster = decode_image(bytes);
    out.features = extract_features(raster, bytes, out.hash, annotators_, config_.features);
    out.forensics = analyze_manipulation(raster, out.features->descriptors, out.hash, config_.forensics);
  } catch (const Error& e) {
    out.error = e;
  }
  out.bytes = std::move(bytes);
  return out;
}

Engine::Prepared Engine::prepare(std::string line, std::size_t line_no, const fs::path& media_root) const {
  Prepared job;
  job.line = line_no;
  try {
    job.post = parse_post_line(line);
  } catch (const Error& e) {
    job.error = e;
    return job;
  }
  std::set<ContentHash> seen;
  for (const auto& ref : job.post->images) {
    try {
      Bytes bytes = load_image_payload(ref, media_root);
      ContentHash hash = sha256(bytes);
      if (!seen.insert(hash).second) continue;
      job.images.push_back(analyze(std::move(hash), std::move(bytes)));
    } catch (const Error& e) {
      PreparedImage failed;
      failed.error = e;
      job.images.push_back(std::move(failed));
    }
  }
  return job;
}

IngestReport Engine::ingest(std::istream& feed, const fs::path& media_root) {
  if (mode_ != EventLog::Mode::ReadWrite) throw Error(ErrorCode::Io, "engine opened read-only");
  const fs::path root = media_root.empty() ? config_.media_root : media_root;
  IngestReport report;
  BoundedQueue<std::future<Prepared>> queue(config_.queue_depth);
  std::exception_ptr failure;

  // Preparation fans out over the pool; commits happen here, in feed order.
  std::thread committer([&] {
    while (auto fut = queue.pop()) {
      if (failure) continue;
      try {
        Prepared job = fut->get();
        commit(job, report);
      } catch (...) {
        failure = std::current_exception();
        queue.close();
      }
    }
  });

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(feed, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fut = pool_->submit([this, l = std::move(line), line_no, &root]() mutable {
      return prepare(std::move(l), line_no, root);
    });
    if (!queue.push(std::move(fut))) break;
  }
  queue.close();
  committer.join();
  if (failure) std::rethrow_exception(failure);
  return report;
}

IngestReport Engine::ingest_lines(const std::vector<std::string>& lines, const fs::path& media_root) {
  std::string joined;
  for (const auto& l : lines) {
    joined += l;
    joined += '\n';
  }
  std::istringstream in(joined);
  return ingest(in, media_root);
}

void Engine::commit(Prepared& job, IngestReport& report) {
  auto reject = [&](const Error& e) {
    ++report.rejected;
    report.issues.push_back({job.line, std::string(to_string(e.code())), e.what()});
    spdlog::warn("line {}: {} ({})", job.line, e.what(), to_string(e.code()));
  };
  if (job.error) return reject(*job.error);

  std::vector<PreparedImage> usable;
  for (auto& img : job.images) {
    if (img.error) {
      report.issues.push_back({job.line, std::string(to_string(img.error->code())), img.error->what()});
      spdlog::warn("line {}: skipping image: {}", job.line, img.error->what());
    } else {
      usable.push_back(std::move(img));
    }
  }
  if (usable.empty()) {
    return reject(Error(ErrorCode::NoImages, fmt::format("post {} has no usable images", job.post->post_id)));
  }

  std::unique_lock lock(mutex_);
  if (state_.posts().count({job.post->platform, job.post->post_id}) != 0) {
    ++report.duplicates;
    return;
  }
  std::size_t fresh = 0;
  for (const auto& img : usable) fresh += state_.image(img.hash) == nullptr ? 1 : 0;
  commit_post(*job.post, usable);
  ++report.accepted;
  report.new_images += fresh;
}

void Engine::commit_post(const MediaPost& post, std::vector<PreparedImage>& images) {
  MediaPost stored = post;
  stored.images.clear();
  for (auto& img : images) {
    stored.images.push_back(img.hash.str());
    if (state_.image(img.hash) == nullptr) {
      // Images are never removed, so one that was complete when prepared is still here.
      if (!img.features) throw Error(ErrorCode::CorruptLog, fmt::format("image {} vanished", img.hash.str()));
      if (blobs_.put(img.bytes) != img.hash) throw Error(ErrorCode::Io, "blob hash mismatch");
    }
  }
  emit(EventKind::PostIngested, events::post_ingested(stored), post.timestamp);
  for (auto& img : images) {
    if (state_.image(img.hash) == nullptr) add_image(img, post.timestamp);
  }
  observe(state_.posts().at({post.platform, post.post_id}));
  raise_alerts();
  finish_commit();
}

void Engine::add_image(PreparedImage& img, Instant at) {
  emit(EventKind::ImageAdded, events::image_added(img.hash, at, img.format, img.bytes.size()), at);
  const ContentHash desc_blob = blobs_.put(serialize_descriptors(img.features->descriptors));
  emit(EventKind::FeaturesComputed, events::features_computed(*img.features, desc_blob), at);
  link(img.hash, at);
  emit(EventKind::ForensicsComputed, events::forensics_computed(*img.forensics), at);
}

void Engine::link(const ContentHash& hash, Instant at) {
  const FeatureRecord& rec = *state_.image(hash)->features;
  // An edge logged just before a crash may still be missing its merge.
  std::vector<MatchEdge> unmerged;
  for (const MatchEdge* e : state_.edges_of(hash)) {
    if (state_.clusters().plan(e->hash_a, e->hash_b).merged()) unmerged.push_back(*e);
  }
  for (const auto& e : unmerged) {
    const ClusterDelta delta = state_.clusters().plan(e.hash_a, e.hash_b);
    if (delta.merged()) emit(EventKind::ClustersMerged, events::clusters_merged(e.hash_a, e.hash_b, delta), at);
  }
  for (const auto& cand : state_.index().candidate_neighbors(hash)) {
    const EdgeKey key = hash < cand.hash ? EdgeKey{hash, cand.hash} : EdgeKey{cand.hash, hash};
    if (state_.edges().count(key) != 0) continue;
    const ImageRecord* other = state_.image(cand.hash);
    if (other == nullptr || !other->features) continue;
    const auto edge = verify_features(rec, *other->features, config_.match);
    if (!edge) continue;
    emit(EventKind::EdgeAccepted, events::edge_accepted(*edge), at);
    const ClusterDelta delta = state_.clusters().plan(edge->hash_a, edge->hash_b);
    if (delta.merged()) {
      emit(EventKind::ClustersMerged, events::clusters_merged(edge->hash_a, edge->hash_b, delta), at);
    }
  }
}

void Engine::observe(const PostRecord& rec) {
  std::set<std::string> clusters;
  for (const auto& hex : rec.post.images) {
    const ContentHash h = ContentHash::from_hex(hex);
    if (state_.clusters().contains(h)) clusters.insert(state_.clusters().cluster_of(h));
  }
  const PostRef ref = ref_of(rec.post);
  emit(EventKind::ObservationRecorded,
       events::observation_recorded(ref, std::vector<std::string>(clusters.begin(), clusters.end())), ref.timestamp);
}

void Engine::raise_alerts() {
  for (const auto& alert : state_.due_alerts()) {
    emit(EventKind::AlertRaised, events::alert_raised(alert), alert.triggered_at);
  }
}

void Engine::finish_commit() {
  log_->sync();
  const std::uint64_t seq = state_.last_seq();
  if (seq / config_.snapshot_every > last_snapshot_ / config_.snapshot_every) {
    snapshots_.write(seq, state_.serialize());
    last_snapshot_ = seq;
  }
}

void Engine::snapshot_now() {
  std::unique_lock lock(mutex_);
  if (mode_ != EventLog::Mode::ReadWrite) throw Error(ErrorCode::Io, "engine opened read-only");
  log_->sync();
  snapshots_.write(state_.last_seq(), state_.serialize());
  last_snapshot_ = state_.last_seq();
}

// Completes work a crash interrupted between events of one commit: images
// without features, edges or forensics, and posts without observations.
void Engine::recover() {
  const std::uint64_t before = state_.last_seq();
  std::vector<const PostRecord*> posts;
  for (const auto& [key, rec] : state_.posts()) posts.push_back(&rec);
  std::sort(posts.begin(), posts.end(), [](auto* a, auto* b) { return a->seq < b->seq; });

  for (const PostRecord* rec : posts) {
    for (const auto& hex : rec->post.images) {
      const ContentHash hash = ContentHash::from_hex(hex);
      const ImageRecord* img = state_.image(hash);
      if (img != nullptr && img->complete()) continue;
      if (!blobs_.contains(hash)) {
        spdlog::error("recovery: blob {} is missing; image left out", hash.str());
        continue;
      }
      Bytes bytes = blobs_.get(hash);
      PreparedImage pre;
      pre.hash = hash;
      pre.format = format_name(sniff_format(bytes));
      try {
        const RasterImage raster = decode_image(bytes);
        pre.features = extract_features(raster, bytes, hash, annotators_, config_.features);
        pre.forensics = analyze_manipulation(raster, pre.features->descriptors, hash, config_.forensics);
      } catch (const Error& e) {
        spdlog::error("recovery: image {} does not decode: {}", hash.str(), e.what());
        continue;
      }
      pre.bytes = std::move(bytes);
      const Instant at = state_.dedup().get(hash).first_seen;
      if (img == nullptr) {
        add_image(pre, at);
        continue;
      }
      if (!img->features) {
        const ContentHash desc_blob = blobs_.put(serialize_descriptors(pre.features->descriptors));
        emit(EventKind::FeaturesComputed, events::features_computed(*pre.features, desc_blob), at);
      }
      link(hash, at);
      emit(EventKind::ForensicsComputed, events::forensics_computed(*pre.forensics), at);
    }
    if (!rec->observed) observe(*rec);
  }
  raise_alerts();
  if (state_.last_seq() != before) {
    spdlog::info("recovery: appended {} events", state_.last_seq() - before);
    finish_commit();
  }
}

RelatedImagesResult Engine::query_upload(ByteView bytes, bool persist, std::optional<Instant> at) {
  if (bytes.size() > config_.max_upload_bytes) {
    throw Error(ErrorCode::PayloadTooLarge,
                fmt::format("upload of {} bytes exceeds the {} byte limit", bytes.size(), config_.max_upload_bytes));
  }
  if (persist && mode_ != EventLog::Mode::ReadWrite) throw Error(ErrorCode::Io, "engine opened read-only");

  PreparedImage pre;
  pre.hash = sha256(bytes);
  pre.bytes.assign(bytes.begin(), bytes.end());
  pre.format = format_name(sniff_format(bytes));
  const RasterImage raster = decode_image(bytes);
  pre.features = extract_features(raster, bytes, pre.hash, annotators_, config_.features);
  if (persist) pre.forensics = analyze_manipulation(raster, pre.features->descriptors, pre.hash, config_.forensics);

  RelatedImagesResult result;
  result.query_hash = pre.hash;
  {
    std::shared_lock lock(mutex_);
    for (const auto& cand : state_.index().candidates(pre.features->descriptors, pre.features->phash)) {
      const ImageRecord* other = state_.image(cand.hash);
      if (other == nullptr || !other->features) continue;
      if (const auto edge = verify_oriented(*pre.features, *other->features, config_.match)) {
        result.matches.push_back({cand.hash, edge->inliers, edge->score, edge->region_a, edge->region_b, {}});
      }
    }
  }
  std::sort(result.matches.begin(), result.matches.end(), [](const RelatedMatch& x, const RelatedMatch& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.inliers != y.inliers) return x.inliers > y.inliers;
    return x.content_hash < y.content_hash;
  });

  if (persist) {
    std::unique_lock lock(mutex_);
    MediaPost post;
    post.post_id = "upload-" + pre.hash.str().substr(0, 16);
    post.platform = Platform::other;
    post.timestamp = at.value_or(wall_clock_now());
    post.images = {pre.hash.str()};
    if (state_.posts().count({post.platform, post.post_id}) == 0) {
      std::vector<PreparedImage> images;
      images.push_back(std::move(pre));
      commit_post(post, images);
    }
    result.persisted = true;
  }

  std::shared_lock lock(mutex_);
  for (auto& m : result.matches) {
    if (state_.clusters().contains(m.content_hash)) m.cluster_id = state_.clusters().cluster_of(m.content_hash);
  }
  return result;
}

void Engine::rebuild_index() {
  std::unique_lock lock(mutex_);
  state_.rebuild_index();
}

std::string Engine::serialized_state() const {
  std::shared_lock lock(mutex_);
  return state_.serialize();
}

// ---------------------------------------------------------------------------
// read documents

namespace {

Json node_doc(const State& s, const ContentHash& h) {
  const ImageRecord& img = s.images().at(h);
  return Json{{"hash", h},
              {"phash", img.features ? Json(img.features->phash) : Json(nullptr)},
              {"cluster_id", s.clusters().cluster_of(h)},
              {"verdict", img.forensics ? img.forensics->verdict : 0.0}};
}

Json series_doc(const Series& series) {
  Json out = Json::array();
  for (const auto& [w, counts] : series) {
    int total = 0;
    Json per = Json::object();
    for (const auto& [p, n] : counts) {
      per[std::string(to_string(p))] = n;
      total += n;
    }
    out.push_back(Json{{"window_start", w}, {"count", total}, {"platforms", std::move(per)}});
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

Json Engine::summary_locked(const std::string& id) const {
  if (!state_.clusters().has_cluster(id)) throw Error(ErrorCode::NotFound, fmt::format("no cluster {}", id));
  const Cluster& c = state_.clusters().get(id);
  Json platforms = Json::object();
  for (const auto& [p, n] : state_.platform_counts(id)) platforms[std::string(to_string(p))] = n;
  return Json{{"cluster_id", id},
              {"size", c.members.size()},
              {"representative", state_.clusters().representative(id)},
              {"created_at", c.created_at},
              {"manipulated", c.manipulated},
              {"platforms", std::move(platforms)}};
}

Json Engine::cluster_summary(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return summary_locked(id);
}

Json Engine::clusters(ClusterSort sort, std::size_t limit, std::size_t offset) const {
  std::shared_lock lock(mutex_);
  std::vector<const Cluster*> all;
  for (const auto& [id, c] : state_.clusters().clusters()) all.push_back(&c);
  std::sort(all.begin(), all.end(), [sort](const Cluster* a, const Cluster* b) {
    if (sort == ClusterSort::size && a->members.size() != b->members.size()) {
      return a->members.size() > b->members.size();
    }
    if (sort == ClusterSort::recent && a->created_at != b->created_at) return a->created_at > b->created_at;
    return a->id < b->id;
  });
  Json items = Json::array();
  for (std::size_t i = offset; i < all.size() && i < offset + limit; ++i) items.push_back(summary_locked(all[i]->id));
  return Json{{"total", all.size()},
              {"offset", offset},
              {"limit", limit},
              {"sort", sort == ClusterSort::size ? "size" : "recent"},
              {"items", std::move(items)}};
}

Json Engine::cluster_detail(const std::string& id) const {
  std::shared_lock lock(mutex_);
  Json doc = summary_locked(id);
  const Cluster& c = state_.clusters().get(id);
  Json members = Json::array();
  Json edges = Json::array();
  for (const auto& h : c.members) {
    Json node = node_doc(state_, h);
    node["first_seen"] = state_.images().at(h).first_seen;
    members.push_back(std::move(node));
  }
  for (const auto& [key, edge] : state_.edges()) {
    if (c.members.count(key.first) != 0) edges.push_back(edge);
  }
  Json alerts = Json::array();
  for (const auto& a : state_.trends().alerts()) {
    if (a.cluster_id == id) alerts.push_back(a);
  }
  doc["members"] = std::move(members);
  doc["edges"] = std::move(edges);
  doc["series"] = series_doc(state_.trends().series(id));
  doc["alerts"] = std::move(alerts);
  return doc;
}

Json Engine::image_detail(const ContentHash& hash) const {
  std::shared_lock lock(mutex_);
  const ImageRecord* img = state_.image(hash);
  if (img == nullptr) throw Error(ErrorCode::NotFound, fmt::format("no image {}", hash.str()));

  Json doc{{"hash", hash},
           {"format", img->format},
           {"byte_size", img->byte_size},
           {"first_seen", img->first_seen},
           {"cluster_id", state_.clusters().cluster_of(hash)}};
  if (img->features) {
    doc["width"] = img->features->width;
    doc["height"] = img->features->height;
    doc["phash"] = img->features->phash;
    doc["keypoints"] = img->features->descriptors.size();
    doc["annotations"] = img->features->annotations;
  } else {
    doc["width"] = doc["height"] = doc["phash"] = doc["keypoints"] = nullptr;
    doc["annotations"] = Json::object();
  }
  if (img->forensics) {
    const auto& f = *img->forensics;
    doc["forensics"] = Json{{"verdict", f.verdict},
                            {"region_pairs", f.copy_move.region_pairs},
                            {"heatmap",
                             {{"width_blocks", f.splice.width_blocks},
                              {"height_blocks", f.splice.height_blocks},
                              {"block_size", config_.forensics.block_size},
                              {"url", fmt::format("/api/images/{}/heatmap", hash.str())}}}};
  } else {
    doc["forensics"] = nullptr;
  }

  Json neighbors = Json::array();
  for (const MatchEdge* e : state_.edges_of(hash)) {
    const bool self_a = e->hash_a == hash;
    const ContentHash& other = self_a ? e->hash_b : e->hash_a;
    neighbors.push_back(Json{{"hash", other},
                             {"inliers", e->inliers},
                             {"score", e->score},
                             {"region_self", self_a ? e->region_a : e->region_b},
                             {"region_other", self_a ? e->region_b : e->region_a},
                             {"cluster_id", state_.clusters().cluster_of(other)}});
  }
  doc["neighbors"] = std::move(neighbors);

  Json posts = Json::array();
  for (const auto& ref : state_.dedup().get(hash).source_posts) {
    const auto& rec = state_.posts().at({ref.platform, ref.post_id});
    posts.push_back(Json{{"platform", ref.platform},
                         {"post_id", ref.post_id},
                         {"timestamp", ref.timestamp},
                         {"text", rec.post.text}});
  }
  doc["source_posts"] = std::move(posts);
  doc["blob_url"] = fmt::format("/api/images/{}/blob", hash.str());
  return doc;
}

Bytes Engine::heatmap_png(const ContentHash& hash) const {
  std::shared_lock lock(mutex_);
  const ImageRecord* img = state_.image(hash);
  if (img == nullptr || !img->forensics) throw Error(ErrorCode::NotFound, fmt::format("no heatmap for {}", hash.str()));
  return mews::heatmap_png(img->forensics->splice);
}

Bytes Engine::blob(const ContentHash& hash) const {
  {
    std::shared_lock lock(mutex_);
    if (state_.image(hash) == nullptr) throw Error(ErrorCode::NotFound, fmt::format("no image {}", hash.str()));
  }
  return blobs_.get(hash);
}

std::string Engine::media_type(const ContentHash& hash) const {
  std::shared_lock lock(mutex_);
  const ImageRecord* img = state_.image(hash);
  if (img == nullptr) throw Error(ErrorCode::NotFound, fmt::format("no image {}", hash.str()));
  if (img->format == "png") return "image/png";
  if (img->format == "jpeg") return "image/jpeg";
  return "application/octet-stream";
}

Json Engine::graph(const std::optional<std::string>& cluster_id) const {
  std::shared_lock lock(mutex_);
  Json nodes = Json::array();
  Json edges = Json::array();
  if (cluster_id) {
    if (!state_.clusters().has_cluster(*cluster_id)) {
      throw Error(ErrorCode::NotFound, fmt::format("no cluster {}", *cluster_id));
    }
    const auto& members = state_.clusters().get(*cluster_id).members;
    for (const auto& h : members) nodes.push_back(node_doc(state_, h));
    for (const auto& [key, edge] : state_.edges()) {
      if (members.count(key.first) != 0) edges.push_back(edge);
    }
  } else {
    for (const auto& [h, img] : state_.images()) nodes.push_back(node_doc(state_, h));
    for (const auto& [key, edge] : state_.edges()) edges.push_back(edge);
  }
  return Json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

Json Engine::alerts(Instant since) const {
  std::shared_lock lock(mutex_);
  return Json{{"alerts", state_.trends().alert_feed(since)}};
}

Json Engine::search(std::string_view query) const {
  std::shared_lock lock(mutex_);
  const std::string q = lower(query);
  std::map<ContentHash, std::vector<std::string>> hits;
  for (const auto& [key, rec] : state_.posts()) {
    const bool match = lower(rec.post.text).find(q) != std::string::npos ||
                       std::string(to_string(rec.post.platform)).find(q) != std::string::npos;
    if (!match) continue;
    for (const auto& hex : rec.post.images) {
      const ContentHash h = ContentHash::from_hex(hex);
      if (state_.image(h) != nullptr) {
        hits[h].push_back(fmt::format("{}:{}", to_string(rec.post.platform), rec.post.post_id));
      }
    }
  }
  Json results = Json::array();
  for (auto& [h, posts] : hits) {
    std::sort(posts.begin(), posts.end());
    results.push_back(Json{{"hash", h}, {"cluster_id", state_.clusters().cluster_of(h)}, {"posts", posts}});
  }
  return Json{{"query", std::string(query)}, {"results", std::move(results)}};
}

Json Engine::health() const {
  std::shared_lock lock(mutex_);
  return Json{{"status", "ok"},
              {"last_seq", state_.last_seq()},
              {"images", state_.images().size()},
              {"clusters", state_.clusters().clusters().size()},
              {"read_only", mode_ != EventLog::Mode::ReadWrite}};
}

}  // namespace mews
