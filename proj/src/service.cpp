#include "mews/service.hpp"

#include <algorithm>
#include <charconv>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace mews {

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::UnknownImage:
    case ErrorCode::UnknownCluster:
      return 404;
    case ErrorCode::PayloadTooLarge:
      return 413;
    case ErrorCode::MalformedLine:
    case ErrorCode::BadTimestamp:
    case ErrorCode::NoImages:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::CorruptImage:
    case ErrorCode::TooSmall:
    case ErrorCode::BadRequest:
    case ErrorCode::DuplicateImage:
      return 400;
    default:
      return 500;
  }
}

Json error_doc(ErrorCode code, std::string_view message) {
  return Json{{"error", {{"code", std::string(to_string(code))}, {"message", std::string(message)}}}};
}

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, const Json& doc, int status = 200) {
  res.status = status;
  res.set_content(doc.dump(), kJson);
}

void send_error(httplib::Response& res, ErrorCode code, std::string_view message) {
  send_json(res, error_doc(code, message), http_status(code));
}

std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback, std::size_t max) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw Error(ErrorCode::BadRequest, std::string("parameter '") + key + "' must be a non-negative integer");
  }
  return std::min(out, max);
}

bool query_flag(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return false;
  const std::string v = req.get_param_value(key);
  if (v == "true" || v == "1" || v.empty()) return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::BadRequest, std::string("parameter '") + key + "' must be true or false");
}

// A JSON array of posts, one post object, or JSONL.
std::vector<std::string> ingest_lines(const std::string& body) {
  std::vector<std::string> lines;
  try {
    const Json doc = Json::parse(body);
    if (doc.is_array()) {
      for (const auto& post : doc) lines.push_back(post.dump());
      return lines;
    }
    if (doc.is_object()) return {doc.dump()};
  } catch (const Json::parse_error&) {
    // fall through to JSONL
  }
  std::size_t start = 0;
  while (start <= body.size()) {
    const auto nl = body.find('\n', start);
    const auto end = nl == std::string::npos ? body.size() : nl;
    lines.push_back(body.substr(start, end - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return lines;
}

}  // namespace

struct Service::Impl {
  Engine& engine;
  httplib::Server server;

  explicit Impl(Engine& e) : engine(e) { install(); }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        if (http_status(e.code()) >= 500) spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, e.code(), e.what());
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, ErrorCode::Io, "internal error");
      }
    };
  }

  void install() {
    const auto& cfg = engine.config();
    // Upload size is enforced by the engine so oversize requests get a JSON body.
    server.set_payload_max_length(std::max<std::size_t>(cfg.max_upload_bytes * 2, 512u << 20));

    const std::string origin = cfg.cors_origin;
    server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
      if (!origin.empty()) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
      }
    });
    server.Options(R"(/api/.*)", [origin](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      if (!origin.empty()) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Max-Age", "600");
      }
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const ErrorCode code = res.status == 404   ? ErrorCode::NotFound
                             : res.status == 413 ? ErrorCode::PayloadTooLarge
                                                 : ErrorCode::BadRequest;
      const int status = res.status;
      send_error(res, code, httplib::status_message(status));
      res.status = status;
    });

    if (!cfg.ui_root.empty()) {
      if (!server.set_mount_point("/ui", cfg.ui_root.string())) {
        spdlog::warn("ui root {} is not a directory; /ui/ disabled", cfg.ui_root.string());
      }
    }

    server.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                 send_json(res, engine.health());
               }));

    server.Post("/api/ingest", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto lines = ingest_lines(req.body);
                  const IngestReport r = engine.ingest_lines(lines);
                  Json issues = Json::array();
                  for (const auto& i : r.issues) {
                    issues.push_back(Json{{"line", i.line}, {"code", i.code}, {"message", i.message}});
                  }
                  const Json doc{{"accepted", r.accepted},   {"duplicates", r.duplicates},
                                 {"rejected", r.rejected},   {"new_images", r.new_images},
                                 {"issues", std::move(issues)}};
                  const std::size_t posts = r.accepted + r.duplicates + r.rejected;
                  if (posts == 1 && r.rejected == 1) {
                    // A single bad post is a bad request, with the first issue as the error.
                    const auto& first = r.issues.front();
                    res.status = 400;
                    res.set_content(Json{{"error", {{"code", first.code}, {"message", first.message}}}}.dump(), kJson);
                    return;
                  }
                  send_json(res, doc);
                }));

    server.Post("/api/query/upload", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const bool persist = query_flag(req, "persist");
                  const std::string* body = nullptr;
                  httplib::MultipartFormData file;
                  if (req.is_multipart_form_data()) {
                    if (req.has_file("image")) {
                      file = req.get_file_value("image");
                    } else if (!req.files.empty()) {
                      file = req.files.begin()->second;
                    } else {
                      throw Error(ErrorCode::BadRequest, "multipart upload without a file part");
                    }
                    body = &file.content;
                  } else {
                    body = &req.body;
                  }
                  if (body->empty()) throw Error(ErrorCode::BadRequest, "empty upload");
                  const auto result = engine.query_upload(as_bytes(*body), persist);
                  send_json(res, to_json(result));
                }));

    server.Get("/api/clusters", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 ClusterSort sort = ClusterSort::size;
                 if (req.has_param("sort")) {
                   const auto s = req.get_param_value("sort");
                   if (s == "recent") sort = ClusterSort::recent;
                   else if (s != "size") throw Error(ErrorCode::BadRequest, "sort must be size or recent");
                 }
                 const auto limit = query_size(req, "limit", 50, 1000);
                 const auto offset = query_size(req, "offset", 0, std::numeric_limits<std::size_t>::max() / 2);
                 send_json(res, engine.clusters(sort, limit, offset));
               }));

    server.Get(R"(/api/clusters/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, engine.cluster_detail(req.matches[1]));
               }));

    server.Get(R"(/api/images/([^/]+)/heatmap)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const Bytes png = engine.heatmap_png(ContentHash::from_hex(req.matches[1].str()));
                 res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
               }));

    server.Get(R"(/api/images/([^/]+)/blob)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const ContentHash hash = ContentHash::from_hex(req.matches[1].str());
                 const Bytes bytes = engine.blob(hash);
                 res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), engine.media_type(hash));
               }));

    server.Get(R"(/api/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, engine.image_detail(ContentHash::from_hex(req.matches[1].str())));
               }));

    server.Get("/api/graph", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 std::optional<std::string> cluster;
                 if (req.has_param("cluster") && !req.get_param_value("cluster").empty()) {
                   cluster = req.get_param_value("cluster");
                 }
                 send_json(res, engine.graph(cluster));
               }));

    server.Get("/api/alerts", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 Instant since{};
                 if (req.has_param("since")) {
                   const auto parsed = parse_rfc3339(req.get_param_value("since"));
                   if (!parsed) throw Error(ErrorCode::BadRequest, "since must be an RFC 3339 timestamp");
                   since = *parsed;
                 }
                 send_json(res, engine.alerts(since));
               }));

    server.Get("/api/search", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, engine.search(req.get_param_value("q")));
               }));
  }
};

Service::Service(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}
Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Service::run() { return impl_->server.listen_after_bind(); }
void Service::stop() { impl_->server.stop(); }
bool Service::running() const { return impl_->server.is_running(); }

}  // namespace mews
