// Serves a small synthetic corpus and writes every kind of JSON document the
// API returns into <out-dir>/<schema>--<label>.json, for schema validation.

#include <fstream>
#include <iostream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "mews/codec.hpp"
#include "mews/service.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace mews;

namespace {

int failures = 0;

void save(const fs::path& out, const std::string& schema, const std::string& label, const std::string& body) {
  std::ofstream f(out / fmt::format("{}--{}.json", schema, label), std::ios::binary);
  f << body;
}

void fetch(httplib::Client& c, const fs::path& out, const std::string& schema, const std::string& label,
           const std::string& path, int expect = 200) {
  auto res = c.Get(path);
  if (!res || res->status != expect) {
    std::cerr << "GET " << path << " -> " << (res ? res->status : -1) << "\n";
    ++failures;
    return;
  }
  save(out, schema, label, res->body);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: dump_docs <out-dir>\n";
    return 2;
  }
  const fs::path out = argv[1];
  fs::create_directories(out);
  test::TempDir dir("mews-docs");
  EngineConfig cfg = test::test_config(dir / "data", dir / "media");
  cfg.max_upload_bytes = 1 << 20;
  Engine engine(cfg);
  Service service(engine);
  const int port = service.bind("127.0.0.1", 0);
  if (port <= 0) return 1;
  std::thread server([&] { service.run(); });
  while (!service.running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(120, 0);

  fetch(c, out, "health", "empty", "/api/health");
  fetch(c, out, "graph", "empty", "/api/graph");

  // Related groups, a copy-move forgery, and a burst that raises an alert.
  const auto corpus = synth::cluster_corpus(4, 14, 3, 3);
  test::write_corpus(dir / "media", corpus);
  test::write_bytes(dir / "media/forged.png", encode_png(synth::copy_move_forgery(11, {256, 256, 80, 96, 64}).image));
  std::string feed;
  for (const auto& line : synth::corpus_feed(corpus, test::at("2021-06-01T00:00:00Z"))) feed += line + "\n";
  for (int i = 0; i < 6; ++i) {
    feed += fmt::format(
        R"({{"post_id":"f{}","platform":"{}","timestamp":"2021-06-02T10:{:02}:00Z","text":"look at this","images":["forged.png"]}})"
        "\n",
        i, i % 2 ? "twitter" : "telegram", i * 5);
  }
  // Advances the watermark past the burst window.
  feed += fmt::format(
      R"({{"post_id":"late","platform":"facebook","timestamp":"2021-06-02T13:00:00Z","text":"later","images":["{}"]}})"
      "\n",
      corpus.images.back().name);
  feed += R"({"post_id":"empty","platform":"facebook","timestamp":"2021-06-02T13:05:00Z","text":"","images":[]})" "\n";
  feed += "{broken\n";
  auto res = c.Post("/api/ingest", feed, "application/x-ndjson");
  if (!res || res->status != 200) return 1;
  save(out, "ingest-report", "feed", res->body);
  res = c.Post("/api/ingest", R"({"post_id":"x","platform":"twitter","timestamp":"nope","text":"","images":["a"]})",
               "application/json");
  if (res) save(out, "error", "single-bad-post", res->body);

  fetch(c, out, "health", "loaded", "/api/health");
  fetch(c, out, "graph", "all", "/api/graph");
  fetch(c, out, "cluster-list", "size", "/api/clusters?sort=size");
  fetch(c, out, "cluster-list", "recent-page", "/api/clusters?sort=recent&limit=3&offset=2");
  fetch(c, out, "cluster-list", "past-end", "/api/clusters?offset=1000");
  const Json clusters = engine.clusters(ClusterSort::size, 1000, 0);
  for (const auto& item : clusters["items"]) {
    const std::string id = item["cluster_id"];
    fetch(c, out, "cluster-detail", id, "/api/clusters/" + id);
    fetch(c, out, "graph", id, "/api/graph?cluster=" + id);
  }
  for (const auto& [hash, img] : engine.state().images()) {
    fetch(c, out, "image-detail", hash.str().substr(0, 12), "/api/images/" + hash.str());
  }
  fetch(c, out, "alerts", "all", "/api/alerts?since=1970-01-01T00:00:00Z");
  fetch(c, out, "alerts", "none", "/api/alerts?since=2030-01-01T00:00:00Z");
  fetch(c, out, "search", "text", "/api/search?q=look");
  fetch(c, out, "search", "platform", "/api/search?q=telegram");
  fetch(c, out, "search", "nothing", "/api/search?q=zzzz");

  auto upload = [&](const std::string& label, const Bytes& bytes, const std::string& query, int expect) {
    httplib::MultipartFormDataItems items{
        {"image", std::string(bytes.begin(), bytes.end()), "upload.bin", "application/octet-stream"}};
    auto r = c.Post("/api/query/upload" + query, items);
    if (!r || r->status != expect) {
      std::cerr << "upload " << label << " -> " << (r ? r->status : -1) << "\n";
      ++failures;
      return;
    }
    save(out, expect == 200 ? "related-images" : "error", label, r->body);
  };
  upload("copy", corpus.images.front().bytes, "?persist=false", 200);
  upload("noise", encode_png(synth::white_noise(3, 200, 200)), "", 200);
  upload("persisted", encode_png(synth::scene(99)), "?persist=true", 200);
  upload("undecodable", Bytes{'n', 'o', 'p', 'e'}, "", 400);
  upload("too-large", Bytes(cfg.max_upload_bytes + 1, 0), "", 413);

  fetch(c, out, "error", "unknown-image", "/api/images/" + std::string(64, '0'), 404);
  fetch(c, out, "error", "bad-hash", "/api/images/xyz", 400);
  fetch(c, out, "error", "unknown-cluster", "/api/clusters/c0000000000000000", 404);
  fetch(c, out, "error", "bad-sort", "/api/clusters?sort=name", 400);
  fetch(c, out, "error", "bad-since", "/api/alerts?since=yesterday", 400);
  fetch(c, out, "error", "unknown-route", "/api/nothing", 404);

  service.stop();
  server.join();
  return failures == 0 ? 0 : 1;
}
