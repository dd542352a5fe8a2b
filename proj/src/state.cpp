#include "mews/state.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

namespace mews {

namespace events {

Json post_ingested(const MediaPost& post) { return post; }

Json image_added(const ContentHash& hash, Instant first_seen, std::string_view format, std::size_t byte_size) {
  return Json{{"hash", hash}, {"first_seen", first_seen}, {"format", format}, {"byte_size", byte_size}};
}

Json features_computed(const FeatureRecord& r, const ContentHash& descriptor_blob) {
  return Json{{"hash", r.content_hash},
              {"width", r.width},
              {"height", r.height},
              {"phash", r.phash},
              {"keypoints", r.descriptors.size()},
              {"descriptor_blob", descriptor_blob},
              {"annotations", r.annotations}};
}

Json forensics_computed(const ManipulationReport& report) { return report; }

Json edge_accepted(const MatchEdge& edge) { return edge; }

Json clusters_merged(const ContentHash& a, const ContentHash& b, const ClusterDelta& delta) {
  return Json{{"a", a}, {"b", b}, {"first", delta.first}, {"second", delta.second}, {"survivor", delta.survivor}};
}

Json observation_recorded(const PostRef& ref, const std::vector<std::string>& clusters) {
  Json j = ref;
  j["clusters"] = clusters;
  return j;
}

Json alert_raised(const TrendAlert& alert) { return alert; }

}  // namespace events

namespace {

Json features_doc(const ImageRecord& img) {
  if (!img.features) return nullptr;
  return events::features_computed(*img.features, img.descriptor_blob);
}

FeatureRecord features_from(const Json& j, const BlobStore& blobs) {
  FeatureRecord r;
  j.at("hash").get_to(r.content_hash);
  j.at("width").get_to(r.width);
  j.at("height").get_to(r.height);
  j.at("phash").get_to(r.phash);
  r.annotations = j.at("annotations");
  const auto blob = j.at("descriptor_blob").get<ContentHash>();
  r.descriptors = parse_descriptors(blobs.get(blob));
  if (r.descriptors.size() != j.at("keypoints").get<std::size_t>()) {
    throw Error(ErrorCode::CorruptLog, fmt::format("descriptor blob {} has the wrong length", blob.str()));
  }
  return r;
}

}  // namespace

State::State(StateParams params)
    : params_(params), clusters_(params.clusters), trends_(params.trends), index_(params.index) {}

void State::reset() {
  last_seq_ = 0;
  watermark_.reset();
  posts_.clear();
  dedup_.clear();
  images_.clear();
  edges_.clear();
  adjacency_.clear();
  clusters_ = ClusterSet(params_.clusters);
  trends_ = TrendTracker(params_.trends);
  index_.clear();
}

void State::corrupt(const Event& event, const std::string& why) const {
  throw Error(ErrorCode::CorruptLog, fmt::format("event {} ({}): {}", event.seq, to_string(event.kind), why));
}

void State::apply(const Event& event, const BlobStore& blobs) {
  if (event.seq != last_seq_ + 1) corrupt(event, fmt::format("expected seq {}", last_seq_ + 1));
  const Json& p = event.payload;
  try {
    switch (event.kind) {
      case EventKind::PostIngested: {
        MediaPost post = p.get<MediaPost>();
        PostKey key{post.platform, post.post_id};
        if (posts_.count(key) != 0) corrupt(event, "post already ingested");
        if (post.images.empty()) corrupt(event, "post without images");
        const PostRef ref = ref_of(post);
        for (const auto& hex : post.images) dedup_.dedupe(ContentHash::from_hex(hex), ref);
        if (!watermark_ || *watermark_ < post.timestamp) watermark_ = post.timestamp;
        posts_.emplace(std::move(key), PostRecord{std::move(post), event.seq, false});
        break;
      }
      case EventKind::ImageAdded: {
        const auto hash = p.at("hash").get<ContentHash>();
        if (images_.count(hash) != 0) corrupt(event, "image already added");
        if (!dedup_.contains(hash)) corrupt(event, "image not referenced by any post");
        ImageRecord img;
        img.hash = hash;
        img.added_seq = event.seq;
        p.at("first_seen").get_to(img.first_seen);
        p.at("format").get_to(img.format);
        p.at("byte_size").get_to(img.byte_size);
        trends_.register_cluster(clusters_.add_image(hash, img.first_seen));
        images_.emplace(hash, std::move(img));
        break;
      }
      case EventKind::FeaturesComputed: {
        const auto hash = p.at("hash").get<ContentHash>();
        const auto it = images_.find(hash);
        if (it == images_.end()) corrupt(event, "unknown image");
        if (it->second.features) corrupt(event, "features already recorded");
        FeatureRecord record = features_from(p, blobs);
        index_.insert(hash, record.descriptors, record.phash);
        clusters_.set_phash(hash, record.phash);
        it->second.descriptor_blob = p.at("descriptor_blob").get<ContentHash>();
        it->second.features = std::move(record);
        break;
      }
      case EventKind::ForensicsComputed: {
        auto report = p.get<ManipulationReport>();
        const auto it = images_.find(report.content_hash);
        if (it == images_.end()) corrupt(event, "unknown image");
        if (it->second.forensics) corrupt(event, "forensics already recorded");
        clusters_.set_verdict(report.content_hash, report.verdict);
        it->second.forensics = std::move(report);
        break;
      }
      case EventKind::EdgeAccepted: {
        auto edge = p.get<MatchEdge>();
        if (!(edge.hash_a < edge.hash_b)) corrupt(event, "edge endpoints not in canonical order");
        if (images_.count(edge.hash_a) == 0 || images_.count(edge.hash_b) == 0) corrupt(event, "unknown endpoint");
        EdgeKey key{edge.hash_a, edge.hash_b};
        if (edges_.count(key) != 0) corrupt(event, "edge already accepted");
        adjacency_[edge.hash_a].push_back(edge.hash_b);
        adjacency_[edge.hash_b].push_back(edge.hash_a);
        edges_.emplace(std::move(key), std::move(edge));
        break;
      }
      case EventKind::ClustersMerged: {
        const auto a = p.at("a").get<ContentHash>();
        const auto b = p.at("b").get<ContentHash>();
        if (edges_.count(a < b ? EdgeKey{a, b} : EdgeKey{b, a}) == 0) corrupt(event, "merge without an edge");
        const ClusterDelta plan = clusters_.plan(a, b);
        if (!plan.merged() || plan.first != p.at("first").get<std::string>() ||
            plan.second != p.at("second").get<std::string>() ||
            plan.survivor != p.at("survivor").get<std::string>()) {
          corrupt(event, "merge does not match the cluster state");
        }
        clusters_.apply(a, b);
        trends_.merge(plan.survivor, plan.absorbed());
        break;
      }
      case EventKind::ObservationRecorded: {
        const auto ref = p.get<PostRef>();
        const auto it = posts_.find({ref.platform, ref.post_id});
        if (it == posts_.end()) corrupt(event, "observation for an unknown post");
        if (it->second.observed) corrupt(event, "post already observed");
        for (const auto& id : p.at("clusters")) {
          trends_.record_observation(id.get<std::string>(), ref.platform, ref.timestamp);
        }
        it->second.observed = true;
        break;
      }
      case EventKind::AlertRaised: {
        trends_.record_alert(p.get<TrendAlert>());
        break;
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptLog) throw;
    corrupt(event, e.what());
  } catch (const Json::exception& e) {
    corrupt(event, e.what());
  }
  last_seq_ = event.seq;
}

const ImageRecord* State::image(const ContentHash& hash) const {
  const auto it = images_.find(hash);
  return it == images_.end() ? nullptr : &it->second;
}

std::vector<const MatchEdge*> State::edges_of(const ContentHash& hash) const {
  std::vector<const MatchEdge*> out;
  const auto it = adjacency_.find(hash);
  if (it == adjacency_.end()) return out;
  for (const auto& other : it->second) {
    out.push_back(&edges_.at(hash < other ? EdgeKey{hash, other} : EdgeKey{other, hash}));
  }
  std::sort(out.begin(), out.end(), [&](const MatchEdge* x, const MatchEdge* y) {
    if (x->score != y->score) return x->score > y->score;
    const auto& ox = x->hash_a == hash ? x->hash_b : x->hash_a;
    const auto& oy = y->hash_a == hash ? y->hash_b : y->hash_a;
    return ox < oy;
  });
  return out;
}

std::map<Platform, int> State::platform_counts(const std::string& cluster_id) const {
  std::set<PostRef> posts;
  for (const auto& h : clusters_.get(cluster_id).members) {
    if (!dedup_.contains(h)) continue;
    for (const auto& ref : dedup_.get(h).source_posts) posts.insert(ref);
  }
  std::map<Platform, int> out;
  for (const auto& ref : posts) ++out[ref.platform];
  return out;
}

std::vector<TrendAlert> State::due_alerts() {
  if (!watermark_) return {};
  return trends_.sweep(*watermark_, [&](const std::string& id) {
    if (!clusters_.has_cluster(id)) return ClusterFacts{};
    const Cluster& c = clusters_.get(id);
    return ClusterFacts{c.manipulated, c.created_at};
  });
}

void State::rebuild_index() {
  index_.clear();
  for (const auto& [hash, img] : images_) {
    if (img.features) index_.insert(hash, img.features->descriptors, img.features->phash);
  }
}

Json State::to_json() const {
  Json posts = Json::array();
  for (const auto& [key, rec] : posts_) {
    Json j = rec.post;
    j["seq"] = rec.seq;
    j["observed"] = rec.observed;
    posts.push_back(std::move(j));
  }

  Json images = Json::array();
  for (const auto& [hash, img] : images_) {
    images.push_back(Json{{"hash", hash},
                          {"added_seq", img.added_seq},
                          {"first_seen", img.first_seen},
                          {"format", img.format},
                          {"byte_size", img.byte_size},
                          {"features", features_doc(img)},
                          {"forensics", img.forensics ? Json(*img.forensics) : Json(nullptr)}});
  }

  Json edges = Json::array();
  for (const auto& [key, edge] : edges_) edges.push_back(edge);

  Json clusters = Json::array();
  for (const auto& [id, c] : clusters_.clusters()) {
    clusters.push_back(
        Json{{"id", id}, {"members", c.members}, {"created_at", c.created_at}, {"manipulated", c.manipulated}});
  }

  Json series = Json::object();
  for (const auto& [id, s] : trends_.all_series()) {
    Json windows = Json::array();
    for (const auto& [w, counts] : s) {
      Json per = Json::object();
      for (const auto& [platform, n] : counts) per[std::string(to_string(platform))] = n;
      windows.push_back(Json{{"window", w}, {"counts", std::move(per)}});
    }
    series[id] = std::move(windows);
  }
  Json alerted = Json::array();
  for (const auto& [id, w] : trends_.alerted()) alerted.push_back(Json::array({id, w}));

  return Json{{"last_seq", last_seq_},
              {"watermark", watermark_ ? Json(*watermark_) : Json(nullptr)},
              {"posts", std::move(posts)},
              {"items", dedup_.items()},
              {"images", std::move(images)},
              {"edges", std::move(edges)},
              {"clusters", std::move(clusters)},
              {"trends", Json{{"series", std::move(series)}, {"alerted", std::move(alerted)}, {"alerts", trends_.alerts()}}}};
}

void State::load(const Json& doc, const BlobStore& blobs) {
  reset();
  try {
    doc.at("last_seq").get_to(last_seq_);
    if (!doc.at("watermark").is_null()) watermark_ = doc.at("watermark").get<Instant>();

    for (const auto& j : doc.at("posts")) {
      PostRecord rec{j.get<MediaPost>(), j.at("seq").get<std::uint64_t>(), j.at("observed").get<bool>()};
      PostKey key{rec.post.platform, rec.post.post_id};
      posts_.emplace(std::move(key), std::move(rec));
    }
    for (const auto& j : doc.at("items")) dedup_.restore(j.get<IngestItem>());

    for (const auto& c : doc.at("clusters")) {
      clusters_.restore_cluster(Cluster{c.at("id").get<std::string>(), c.at("members").get<std::set<ContentHash>>(),
                                        c.at("created_at").get<Instant>(), c.at("manipulated").get<bool>()});
    }

    for (const auto& j : doc.at("images")) {
      ImageRecord img;
      j.at("hash").get_to(img.hash);
      j.at("added_seq").get_to(img.added_seq);
      j.at("first_seen").get_to(img.first_seen);
      j.at("format").get_to(img.format);
      j.at("byte_size").get_to(img.byte_size);
      if (!j.at("features").is_null()) {
        img.features = features_from(j.at("features"), blobs);
        img.descriptor_blob = j.at("features").at("descriptor_blob").get<ContentHash>();
        clusters_.set_phash(img.hash, img.features->phash);
      }
      if (!j.at("forensics").is_null()) {
        img.forensics = j.at("forensics").get<ManipulationReport>();
        clusters_.set_verdict(img.hash, img.forensics->verdict);
      }
      const ContentHash hash = img.hash;
      images_.emplace(hash, std::move(img));
    }

    for (const auto& j : doc.at("edges")) {
      auto edge = j.get<MatchEdge>();
      adjacency_[edge.hash_a].push_back(edge.hash_b);
      adjacency_[edge.hash_b].push_back(edge.hash_a);
      EdgeKey key{edge.hash_a, edge.hash_b};
      edges_.emplace(std::move(key), std::move(edge));
    }

    const Json& t = doc.at("trends");
    std::map<std::string, Series> series;
    for (const auto& [id, windows] : t.at("series").items()) {
      Series& s = series[id];
      for (const auto& w : windows) {
        WindowCounts& counts = s[w.at("window").get<Instant>()];
        for (const auto& [platform, n] : w.at("counts").items()) counts[parse_platform(platform)] = n.get<int>();
      }
    }
    std::set<std::pair<std::string, Instant>> alerted;
    for (const auto& a : t.at("alerted")) alerted.emplace(a.at(0).get<std::string>(), a.at(1).get<Instant>());
    trends_.restore(std::move(series), std::move(alerted), t.at("alerts").get<std::vector<TrendAlert>>());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptLog, fmt::format("snapshot: {}", e.what()));
  }
  rebuild_index();
}

}  // namespace mews
