#include <thread>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <httplib.h>

#include "mews/codec.hpp"
#include "mews/service.hpp"
#include "support.hpp"

namespace mews {
namespace {

namespace fs = std::filesystem;
using test::at;
using test::TempDir;

// An engine plus a live server on a loopback port.
class Harness {
 public:
  explicit Harness(const std::function<void(EngineConfig&)>& tweak = {}) {
    cfg_ = test::test_config(dir_ / "data", dir_ / "media");
    if (tweak) tweak(cfg_);
    engine_ = std::make_unique<Engine>(cfg_);
    service_ = std::make_unique<Service>(*engine_);
    port_ = service_->bind("127.0.0.1", 0);
    EXPECT_GT(port_, 0);
    thread_ = std::thread([this] { service_->run(); });
    while (!service_->running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  ~Harness() {
    service_->stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  Engine& engine() { return *engine_; }
  const TempDir& dir() const { return dir_; }

  Json get_json(const std::string& path, int expect = 200) {
    auto res = client().Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    EXPECT_EQ(res->get_header_value("Content-Type"), "application/json") << path;
    return Json::parse(res->body);
  }

  Json upload(const Bytes& bytes, const std::string& query, int expect = 200) {
    httplib::MultipartFormDataItems items{
        {"image", std::string(bytes.begin(), bytes.end()), "upload.bin", "application/octet-stream"}};
    auto res = client().Post("/api/query/upload" + query, items);
    EXPECT_TRUE(res);
    if (!res) return nullptr;
    EXPECT_EQ(res->status, expect) << res->body;
    return Json::parse(res->body);
  }

 private:
  TempDir dir_{"mews-svc"};
  EngineConfig cfg_;
  std::unique_ptr<Engine> engine_;
  std::unique_ptr<Service> service_;
  int port_ = -1;
  std::thread thread_;
};

synth::Corpus seed_corpus(Harness& h) {
  auto corpus = synth::cluster_corpus(4, 14, 3, 3);
  test::write_corpus(h.dir() / "media", corpus);
  h.engine().ingest_lines(synth::corpus_feed(corpus, at("2021-06-01T00:00:00Z")));
  return corpus;
}

void expect_error(const Json& doc, const std::string& code) {
  ASSERT_TRUE(doc.contains("error")) << doc.dump();
  EXPECT_EQ(doc["error"]["code"], code);
  EXPECT_TRUE(doc["error"]["message"].is_string());
}

TEST(Service, Health) {
  Harness h;
  const Json doc = h.get_json("/api/health");
  EXPECT_EQ(doc["status"], "ok");
  EXPECT_EQ(doc["images"], 0);
  EXPECT_EQ(doc["read_only"], false);
}

TEST(Service, IngestBodies) {
  Harness h;
  test::write_bytes(h.dir() / "media/a.png", encode_png(synth::scene(1)));
  test::write_bytes(h.dir() / "media/b.png", encode_png(synth::scene(2)));
  auto c = h.client();
  const std::string one = R"({"post_id":"1","platform":"twitter","timestamp":"2021-06-01T00:00:00Z","text":"hello","images":["a.png"]})";
  const std::string two = R"({"post_id":"2","platform":"telegram","timestamp":"2021-06-01T00:01:00Z","text":"","images":["b.png"]})";

  auto res = c.Post("/api/ingest", "[" + one + "," + two + "]", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  auto doc = Json::parse(res->body);
  EXPECT_EQ(doc["accepted"], 2);
  EXPECT_EQ(doc["new_images"], 2);

  res = c.Post("/api/ingest", one + "\n" + two + "\n{bad\n", "application/x-ndjson");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  doc = Json::parse(res->body);
  EXPECT_EQ(doc["duplicates"], 2);
  EXPECT_EQ(doc["rejected"], 1);
  EXPECT_EQ(doc["issues"][0]["line"], 3);
  EXPECT_EQ(doc["issues"][0]["code"], "malformed_line");

  res = c.Post("/api/ingest",
               R"({"post_id":"3","platform":"twitter","timestamp":"not-a-date","text":"","images":["a.png"]})",
               "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  expect_error(Json::parse(res->body), "bad_timestamp");
}

TEST(Service, UploadExactCopyWithoutPersist) {
  Harness h;
  const auto corpus = seed_corpus(h);
  const std::uint64_t seq = h.engine().last_seq();
  const auto& img = corpus.images[0];
  const Json doc = h.upload(img.bytes, "?persist=false");
  EXPECT_EQ(doc["query_hash"], sha256(img.bytes).str());
  EXPECT_EQ(doc["persisted"], false);
  ASSERT_FALSE(doc["matches"].empty());
  EXPECT_EQ(doc["matches"][0]["content_hash"], sha256(img.bytes).str());
  EXPECT_EQ(doc["matches"][0]["cluster_id"], h.engine().state().clusters().cluster_of(sha256(img.bytes)));
  for (std::size_t i = 1; i < doc["matches"].size(); ++i) {
    EXPECT_GE(doc["matches"][i - 1]["score"].get<double>(), doc["matches"][i]["score"].get<double>());
  }
  EXPECT_EQ(h.engine().last_seq(), seq);
}

TEST(Service, UploadNoiseHasNoMatches) {
  Harness h;
  seed_corpus(h);
  const Json doc = h.upload(encode_png(synth::white_noise(99, 200, 200)), "");
  EXPECT_TRUE(doc["matches"].empty());
  EXPECT_EQ(doc["persisted"], false);
}

TEST(Service, UploadCropWithPersistJoinsCluster) {
  Harness h;
  const RasterImage parent = synth::scene(555);
  test::write_bytes(h.dir() / "media/parent.png", encode_png(parent));
  h.engine().ingest_lines(
      {R"({"post_id":"p","platform":"twitter","timestamp":"2021-06-01T00:00:00Z","text":"","images":["parent.png"]})"});
  const ContentHash parent_hash = sha256(encode_png(parent));
  const Bytes crop = encode_jpeg(synth::crop(parent, 30, 20, 200, 210), 85);

  const Json doc = h.upload(crop, "?persist=true");
  EXPECT_EQ(doc["persisted"], true);
  ASSERT_FALSE(doc["matches"].empty());
  EXPECT_EQ(doc["matches"][0]["content_hash"], parent_hash.str());
  const std::string query = doc["query_hash"];
  const Json detail = h.get_json("/api/images/" + query);
  EXPECT_EQ(detail["cluster_id"], h.engine().state().clusters().cluster_of(parent_hash));
  const Json cluster = h.get_json("/api/clusters/" + detail["cluster_id"].get<std::string>());
  EXPECT_EQ(cluster["size"], 2);
  EXPECT_EQ(cluster["platforms"]["other"], 1);
}

TEST(Service, UploadErrors) {
  Harness h([](EngineConfig& c) { c.max_upload_bytes = 4096; });
  expect_error(h.upload(Bytes(5000, 7), "", 413), "payload_too_large");
  expect_error(h.upload(Bytes(100, 7), "", 400), "unsupported_format");
  expect_error(h.upload(encode_png(RasterImage(5, 5, 0)), "", 400), "too_small");
  expect_error(h.upload(encode_png(synth::scene(1, {64, 64})), "?persist=maybe", 400), "bad_request");
  auto res = h.client().Post("/api/query/upload", "", "application/octet-stream");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST(Service, NotFound) {
  Harness h;
  const std::string unknown(64, 'a');
  expect_error(h.get_json("/api/clusters/cdeadbeef", 404), "not_found");
  expect_error(h.get_json("/api/images/" + unknown, 404), "not_found");
  expect_error(h.get_json("/api/images/" + unknown + "/heatmap", 404), "not_found");
  expect_error(h.get_json("/api/images/" + unknown + "/blob", 404), "not_found");
  expect_error(h.get_json("/api/graph?cluster=cnope", 404), "not_found");
  expect_error(h.get_json("/api/images/xyz", 400), "bad_request");
  expect_error(h.get_json("/api/nothing-here", 404), "not_found");
}

TEST(Service, GraphEmptyAndDeterministic) {
  Harness h;
  const Json empty = h.get_json("/api/graph");
  EXPECT_TRUE(empty["nodes"].empty());
  EXPECT_TRUE(empty["edges"].empty());
  seed_corpus(h);
  const Json a = h.get_json("/api/graph");
  const Json b = h.get_json("/api/graph");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a, h.engine().graph());
  EXPECT_EQ(a["nodes"].size(), h.engine().state().images().size());
  EXPECT_FALSE(a["edges"].empty());
  for (const auto& e : a["edges"]) {
    for (const char* k : {"a", "b", "inliers", "score", "region_a", "region_b"}) EXPECT_TRUE(e.contains(k)) << k;
  }
  for (const auto& n : a["nodes"]) {
    for (const char* k : {"hash", "phash", "cluster_id", "verdict"}) EXPECT_TRUE(n.contains(k)) << k;
  }
}

TEST(Service, ChainClusterGraph) {
  // x shares a logo with y, y shares a second logo with z; x and z share nothing.
  Harness h;
  const RasterImage logo1 = synth::crop(synth::scene(77), 60, 60, 90, 90);
  const RasterImage logo2 = synth::crop(synth::scene(78), 60, 60, 90, 90);
  auto paste = [](RasterImage img, const RasterImage& logo, int x, int y) {
    for (int j = 0; j < logo.height; ++j)
      for (int i = 0; i < logo.width; ++i) img.at(x + i, y + j) = logo.at(i, j);
    return img;
  };
  const synth::SceneParams calm{256, 256, 5, 2};
  const RasterImage x = paste(synth::scene(601, calm), logo1, 30, 40);
  const RasterImage y = paste(paste(synth::scene(602, calm), logo1, 10, 10), logo2, 150, 150);
  const RasterImage z = paste(synth::scene(603, calm), logo2, 120, 30);
  int i = 0;
  std::vector<std::string> lines;
  for (const RasterImage* img : {&x, &y, &z}) {
    const std::string name = fmt::format("chain{}.png", i);
    test::write_bytes(h.dir() / "media" / name, encode_png(*img));
    lines.push_back(fmt::format(
        R"({{"post_id":"ch{}","platform":"twitter","timestamp":"2021-06-01T00:0{}:00Z","text":"","images":["{}"]}})", i, i,
        name));
    ++i;
  }
  h.engine().ingest_lines(lines);
  const std::string cluster = h.engine().state().clusters().cluster_of(sha256(encode_png(y)));
  const Json g = h.get_json("/api/graph?cluster=" + cluster);
  EXPECT_EQ(g["nodes"].size(), 3u);
  EXPECT_EQ(g["edges"].size(), 2u);
}

TEST(Service, ClusterPagination) {
  Harness h;
  seed_corpus(h);
  const Json all = h.get_json("/api/clusters?limit=1000");
  const std::size_t total = all["total"];
  ASSERT_EQ(all["items"].size(), total);
  Json paged = Json::array();
  for (std::size_t off = 0; off < total; off += 3) {
    const Json page = h.get_json(fmt::format("/api/clusters?limit=3&offset={}", off));
    for (const auto& it : page["items"]) paged.push_back(it);
  }
  EXPECT_EQ(paged, all["items"]);
  for (std::size_t k = 1; k < total; ++k) {
    EXPECT_GE(all["items"][k - 1]["size"].get<int>(), all["items"][k]["size"].get<int>());
  }
  const Json recent = h.get_json("/api/clusters?sort=recent&limit=1000");
  for (std::size_t k = 1; k < total; ++k) {
    EXPECT_GE(recent["items"][k - 1]["created_at"].get<std::string>(), recent["items"][k]["created_at"].get<std::string>());
  }
  EXPECT_TRUE(h.get_json(fmt::format("/api/clusters?offset={}", total))["items"].empty());
  expect_error(h.get_json("/api/clusters?sort=weird", 400), "bad_request");
  expect_error(h.get_json("/api/clusters?limit=-1", 400), "bad_request");

  const Json first = all["items"][0];
  const Json detail = h.get_json("/api/clusters/" + first["cluster_id"].get<std::string>());
  EXPECT_EQ(detail["size"], first["size"]);
  EXPECT_EQ(detail["members"].size(), first["size"].get<std::size_t>());
  bool rep_is_member = false;
  for (const auto& m : detail["members"]) rep_is_member |= m["hash"] == first["representative"];
  EXPECT_TRUE(rep_is_member);
}

TEST(Service, CorsHeaders) {
  Harness h([](EngineConfig& c) { c.cors_origin = "http://localhost:5173"; });
  auto c = h.client();
  auto res = c.Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  res = c.Options("/api/clusters");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST(Service, ImageDetailHeatmapAndBlob) {
  Harness h;
  const auto corpus = seed_corpus(h);
  const auto& img = corpus.images[1];
  const std::string hash = sha256(img.bytes).str();
  const Json detail = h.get_json("/api/images/" + hash);
  EXPECT_EQ(detail["hash"], hash);
  ASSERT_TRUE(detail["forensics"].is_object());
  EXPECT_FALSE(detail["source_posts"].empty());
  if (img.group >= 0) EXPECT_FALSE(detail["neighbors"].empty());

  auto c = h.client();
  auto res = c.Get("/api/images/" + hash + "/heatmap");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  const RasterImage heat = decode_any_size(as_bytes(res->body));
  EXPECT_EQ(heat.width, detail["forensics"]["heatmap"]["width_blocks"]);
  EXPECT_EQ(heat.height, detail["forensics"]["heatmap"]["height_blocks"]);

  res = c.Get("/api/images/" + hash + "/blob");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(Bytes(res->body.begin(), res->body.end()), img.bytes);
  EXPECT_EQ(res->get_header_value("Content-Type"), detail["format"] == "png" ? "image/png" : "image/jpeg");
}

TEST(Service, AlertsSince) {
  Harness h;
  test::write_bytes(h.dir() / "media/a.png", encode_png(synth::scene(5)));
  test::write_bytes(h.dir() / "media/b.png", encode_png(synth::scene(6)));
  std::vector<std::string> lines;
  for (int i = 0; i < 6; ++i) {
    lines.push_back(fmt::format(
        R"({{"post_id":"a{}","platform":"{}","timestamp":"2021-06-01T10:{:02}:00Z","text":"","images":["a.png"]}})", i,
        i % 2 ? "twitter" : "telegram", i * 5));
  }
  lines.push_back(R"({"post_id":"late","platform":"twitter","timestamp":"2021-06-01T12:00:00Z","text":"","images":["b.png"]})");
  h.engine().ingest_lines(lines);

  const Json all = h.get_json("/api/alerts?since=1970-01-01T00:00:00Z");
  ASSERT_EQ(all["alerts"].size(), 1u);
  const Json& a = all["alerts"][0];
  EXPECT_EQ(a["count"], 6);
  EXPECT_EQ(a["window_start"], "2021-06-01T10:00:00Z");
  EXPECT_EQ(a["triggered_at"], "2021-06-01T12:00:00Z");
  EXPECT_EQ(a["cross_platform"], true);
  EXPECT_EQ(h.get_json("/api/alerts")["alerts"].size(), 1u);
  EXPECT_TRUE(h.get_json("/api/alerts?since=2021-06-01T12:00:01Z")["alerts"].empty());
  expect_error(h.get_json("/api/alerts?since=yesterday", 400), "bad_request");
}

TEST(Service, Search) {
  Harness h;
  seed_corpus(h);
  const Json doc = h.get_json("/api/search?q=CORPUS%20post%201");
  ASSERT_FALSE(doc["results"].empty());
  for (const auto& r : doc["results"]) EXPECT_TRUE(r.contains("cluster_id"));
  const Json tg = h.get_json("/api/search?q=telegram");
  std::size_t telegram_posts = 0;
  for (const auto& [key, rec] : h.engine().state().posts()) telegram_posts += rec.post.platform == Platform::telegram;
  std::size_t found = 0;
  for (const auto& r : tg["results"]) found += r["posts"].size();
  EXPECT_EQ(found, telegram_posts);
  EXPECT_TRUE(h.get_json("/api/search?q=zzzz-nothing")["results"].empty());
}

}  // namespace
}  // namespace mews
