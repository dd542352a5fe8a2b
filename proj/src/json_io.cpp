#include "mews/json_io.hpp"

namespace mews {

void to_json(Json& j, const ContentHash& h) { j = h.str(); }
void from_json(const Json& j, ContentHash& h) { h = ContentHash::from_hex(j.get<std::string>()); }

void to_json(Json& j, Platform p) { j = std::string(to_string(p)); }
void from_json(const Json& j, Platform& p) { p = parse_platform(j.get<std::string>()); }

void to_json(Json& j, PHash64 h) { j = to_hex(h); }
void from_json(const Json& j, PHash64& h) { h = phash_from_hex(j.get<std::string>()); }

void to_json(Json& j, const Box& b) { j = Json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}}; }
void from_json(const Json& j, Box& b) {
  j.at("x0").get_to(b.x0);
  j.at("y0").get_to(b.y0);
  j.at("x1").get_to(b.x1);
  j.at("y1").get_to(b.y1);
}

void to_json(Json& j, const Affine& a) { j = Json::array({a.a, a.b, a.tx, a.c, a.d, a.ty}); }
void from_json(const Json& j, Affine& a) {
  a = Affine{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
             j.at(3).get<double>(), j.at(4).get<double>(), j.at(5).get<double>()};
}

void to_json(Json& j, const PostRef& r) {
  j = Json{{"platform", r.platform}, {"post_id", r.post_id}, {"timestamp", r.timestamp}};
}
void from_json(const Json& j, PostRef& r) {
  j.at("platform").get_to(r.platform);
  j.at("post_id").get_to(r.post_id);
  j.at("timestamp").get_to(r.timestamp);
}

void to_json(Json& j, const MediaPost& p) {
  j = Json{{"post_id", p.post_id},
           {"platform", p.platform},
           {"timestamp", p.timestamp},
           {"text", p.text},
           {"images", p.images}};
}
void from_json(const Json& j, MediaPost& p) {
  j.at("post_id").get_to(p.post_id);
  j.at("platform").get_to(p.platform);
  j.at("timestamp").get_to(p.timestamp);
  j.at("text").get_to(p.text);
  j.at("images").get_to(p.images);
}

void to_json(Json& j, const IngestItem& item) {
  j = Json{{"content_hash", item.content_hash}, {"first_seen", item.first_seen}, {"source_posts", item.source_posts}};
}
void from_json(const Json& j, IngestItem& item) {
  j.at("content_hash").get_to(item.content_hash);
  j.at("first_seen").get_to(item.first_seen);
  j.at("source_posts").get_to(item.source_posts);
}

void to_json(Json& j, const MatchEdge& e) {
  j = Json{{"a", e.hash_a},           {"b", e.hash_b},         {"raw_matches", e.raw_matches},
           {"inliers", e.inliers},    {"score", e.score},      {"region_a", e.region_a},
           {"region_b", e.region_b},  {"transform", e.transform}, {"type", e.type}};
}
void from_json(const Json& j, MatchEdge& e) {
  j.at("a").get_to(e.hash_a);
  j.at("b").get_to(e.hash_b);
  j.at("raw_matches").get_to(e.raw_matches);
  j.at("inliers").get_to(e.inliers);
  j.at("score").get_to(e.score);
  j.at("region_a").get_to(e.region_a);
  j.at("region_b").get_to(e.region_b);
  j.at("transform").get_to(e.transform);
  j.at("type").get_to(e.type);
}

void to_json(Json& j, const RegionPair& r) {
  j = Json{{"source", r.source}, {"destination", r.destination}, {"support", r.support}, {"dx", r.dx}, {"dy", r.dy}};
}
void from_json(const Json& j, RegionPair& r) {
  j.at("source").get_to(r.source);
  j.at("destination").get_to(r.destination);
  j.at("support").get_to(r.support);
  j.at("dx").get_to(r.dx);
  j.at("dy").get_to(r.dy);
}

void to_json(Json& j, const Heatmap& h) {
  j = Json{{"width_blocks", h.width_blocks}, {"height_blocks", h.height_blocks}, {"cells", h.cells}};
}
void from_json(const Json& j, Heatmap& h) {
  j.at("width_blocks").get_to(h.width_blocks);
  j.at("height_blocks").get_to(h.height_blocks);
  j.at("cells").get_to(h.cells);
  if (h.cells.size() != static_cast<std::size_t>(h.width_blocks) * static_cast<std::size_t>(h.height_blocks)) {
    throw Error(ErrorCode::BadRequest, "heatmap cell count does not match its dimensions");
  }
}

void to_json(Json& j, const ManipulationReport& r) {
  j = Json{{"content_hash", r.content_hash},
           {"region_pairs", r.copy_move.region_pairs},
           {"heatmap", r.splice},
           {"verdict", r.verdict}};
}
void from_json(const Json& j, ManipulationReport& r) {
  j.at("content_hash").get_to(r.content_hash);
  j.at("region_pairs").get_to(r.copy_move.region_pairs);
  j.at("heatmap").get_to(r.splice);
  j.at("verdict").get_to(r.verdict);
}

void to_json(Json& j, const TrendAlert& a) {
  j = Json{{"id", a.id},
           {"cluster_id", a.cluster_id},
           {"window_start", a.window_start},
           {"count", a.count},
           {"baseline_mean", a.baseline_mean},
           {"baseline_std", a.baseline_std},
           {"zscore", a.zscore},
           {"platforms", a.platforms},
           {"cross_platform", a.cross_platform},
           {"novel_manipulation", a.novel_manipulation},
           {"triggered_at", a.triggered_at}};
}
void from_json(const Json& j, TrendAlert& a) {
  j.at("id").get_to(a.id);
  j.at("cluster_id").get_to(a.cluster_id);
  j.at("window_start").get_to(a.window_start);
  j.at("count").get_to(a.count);
  j.at("baseline_mean").get_to(a.baseline_mean);
  j.at("baseline_std").get_to(a.baseline_std);
  j.at("zscore").get_to(a.zscore);
  j.at("platforms").get_to(a.platforms);
  j.at("cross_platform").get_to(a.cross_platform);
  j.at("novel_manipulation").get_to(a.novel_manipulation);
  j.at("triggered_at").get_to(a.triggered_at);
}

}  // namespace mews
