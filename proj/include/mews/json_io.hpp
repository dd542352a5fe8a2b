#pragma once

// JSON mappings for the domain types, used by the event log, snapshots and
// the HTTP documents. Timestamps are RFC 3339 strings, hashes lowercase hex.

#include <nlohmann/json.hpp>

#include "mews/clusters.hpp"
#include "mews/common.hpp"
#include "mews/features.hpp"
#include "mews/forensics.hpp"
#include "mews/ingest.hpp"
#include "mews/matchgraph.hpp"
#include "mews/trends.hpp"

namespace nlohmann {

template <>
struct adl_serializer<mews::Instant> {
  static void to_json(json& j, const mews::Instant& t) { j = mews::format_rfc3339(t); }
  static void from_json(const json& j, mews::Instant& t) {
    const auto parsed = mews::parse_rfc3339(j.get<std::string>());
    if (!parsed) throw mews::Error(mews::ErrorCode::BadTimestamp, "bad timestamp " + j.dump());
    t = *parsed;
  }
};

}  // namespace nlohmann

namespace mews {

using Json = nlohmann::json;

void to_json(Json& j, const ContentHash& h);
void from_json(const Json& j, ContentHash& h);
void to_json(Json& j, Platform p);
void from_json(const Json& j, Platform& p);
void to_json(Json& j, PHash64 h);
void from_json(const Json& j, PHash64& h);

void to_json(Json& j, const Box& b);
void from_json(const Json& j, Box& b);
void to_json(Json& j, const Affine& a);
void from_json(const Json& j, Affine& a);

void to_json(Json& j, const PostRef& r);
void from_json(const Json& j, PostRef& r);
void to_json(Json& j, const MediaPost& p);
void from_json(const Json& j, MediaPost& p);
void to_json(Json& j, const IngestItem& item);
void from_json(const Json& j, IngestItem& item);

void to_json(Json& j, const MatchEdge& e);
void from_json(const Json& j, MatchEdge& e);

void to_json(Json& j, const RegionPair& r);
void from_json(const Json& j, RegionPair& r);
void to_json(Json& j, const Heatmap& h);
void from_json(const Json& j, Heatmap& h);
void to_json(Json& j, const ManipulationReport& r);
void from_json(const Json& j, ManipulationReport& r);

void to_json(Json& j, const TrendAlert& a);
void from_json(const Json& j, TrendAlert& a);

}  // namespace mews
