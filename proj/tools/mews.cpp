// mews: ingest feeds, serve the API, query images and export from a data root.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mews/engine.hpp"
#include "mews/service.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string data_root;
  std::string config;
  int verbose = 0;
};

// defaults < config file < flags
mews::EngineConfig base_config(const Globals& g, const CLI::App& app) {
  mews::EngineConfig cfg;
  if (!g.config.empty()) cfg = mews::EngineConfig::load(g.config);
  if (app.get_option("--data-root")->count() > 0 || g.config.empty()) cfg.data_root = g.data_root;
  return cfg;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mews::Error(mews::ErrorCode::Io, "cannot write " + path);
  out << text << '\n';
}

mews::Bytes read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mews::Error(mews::ErrorCode::Io, "cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int serve(mews::Engine& engine, const std::string& host, int port) {
  // Block termination signals everywhere; a dedicated thread waits for them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  mews::Service service(engine);
  const int bound = service.bind(host, port);
  if (bound < 0) {
    spdlog::error("cannot bind {}:{}", host, port);
    return 1;
  }
  spdlog::info("listening on http://{}:{}", host, bound);
  std::thread waiter([&service, set] {
    int sig = 0;
    sigwait(&set, &sig);
    spdlog::info("signal {}, shutting down", sig);
    service.stop();
  });
  const bool ok = service.run();
  if (waiter.joinable()) {
    // run() can also return on its own (bind lost); wake the waiter.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meme early-warning system: image matching, clustering and trend alerts"};
  app.require_subcommand(1);
  Globals g;
  g.data_root = "mews-data";
  app.add_option("--data-root", g.data_root, "Data directory (event log, snapshots, blobs)");
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", g.verbose, "More logging (repeatable)");

  auto* ingest = app.add_subcommand("ingest", "Ingest a JSONL feed ('-' reads stdin)");
  std::string feed;
  std::string media_root;
  ingest->add_option("feed", feed, "Feed file")->required();
  ingest->add_option("--media-root", media_root, "Directory image paths resolve against");

  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_root;
  std::string cors;
  serve_cmd->add_option("--host", host, "Listen address");
  serve_cmd->add_option("--port", port, "Listen port (0 picks a free one)");
  serve_cmd->add_option("--ui-root", ui_root, "Static files served under /ui/");
  serve_cmd->add_option("--cors-origin", cors, "Access-Control-Allow-Origin value ('' disables)");

  auto* query = app.add_subcommand("query", "Find stored images related to an image file");
  std::string image;
  bool persist = false;
  query->add_option("image", image, "Image file")->required()->check(CLI::ExistingFile);
  query->add_flag("--persist", persist, "Also ingest the image as an upload post");

  auto* alerts = app.add_subcommand("alerts", "Print trend alerts");
  std::string since;
  alerts->add_option("--since", since, "RFC 3339 lower bound on trigger time");

  auto* export_cmd = app.add_subcommand("export", "Export the match graph as JSON");
  std::string cluster;
  std::string output;
  export_cmd->add_option("--cluster", cluster, "Restrict to one cluster");
  export_cmd->add_option("-o,--output", output, "Output file (stdout by default)");

  auto* rebuild = app.add_subcommand("rebuild-index", "Rebuild the descriptor index and write a snapshot");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("mews"));
  spdlog::set_level(g.verbose >= 2 ? spdlog::level::trace : g.verbose == 1 ? spdlog::level::debug : spdlog::level::info);

  try {
    mews::EngineConfig cfg = base_config(g, app);

    if (*ingest) {
      if (!media_root.empty()) cfg.media_root = media_root;
      else if (feed != "-") cfg.media_root = fs::path(feed).parent_path();
      mews::Engine engine(cfg);
      mews::IngestReport r;
      if (feed == "-") {
        r = engine.ingest(std::cin);
      } else {
        std::ifstream in(feed);
        if (!in) throw mews::Error(mews::ErrorCode::Io, "cannot read " + feed);
        r = engine.ingest(in);
      }
      for (const auto& issue : r.issues) spdlog::warn("line {}: {}: {}", issue.line, issue.code, issue.message);
      std::cout << mews::Json{{"accepted", r.accepted},
                              {"duplicates", r.duplicates},
                              {"rejected", r.rejected},
                              {"new_images", r.new_images}}
                       .dump()
                << '\n';
      return 0;
    }
    if (*serve_cmd) {
      if (serve_cmd->get_option("--ui-root")->count() > 0) cfg.ui_root = ui_root;
      if (serve_cmd->get_option("--cors-origin")->count() > 0) cfg.cors_origin = cors;
      mews::Engine engine(cfg);
      return serve(engine, host, port);
    }
    if (*query) {
      mews::Engine engine(cfg, persist ? mews::EventLog::Mode::ReadWrite : mews::EventLog::Mode::ReadOnly);
      const mews::Bytes bytes = read_all(image);
      std::cout << mews::to_json(engine.query_upload(bytes, persist)).dump(2) << '\n';
      return 0;
    }
    if (*alerts) {
      mews::Instant t{};
      if (!since.empty()) {
        const auto parsed = mews::parse_rfc3339(since);
        if (!parsed) throw mews::Error(mews::ErrorCode::BadRequest, "--since must be an RFC 3339 timestamp");
        t = *parsed;
      }
      mews::Engine engine(cfg, mews::EventLog::Mode::ReadOnly);
      std::cout << engine.alerts(t).dump(2) << '\n';
      return 0;
    }
    if (*export_cmd) {
      mews::Engine engine(cfg, mews::EventLog::Mode::ReadOnly);
      const auto doc = engine.graph(cluster.empty() ? std::nullopt : std::optional<std::string>(cluster));
      write_out(output, doc.dump(2));
      return 0;
    }
    if (*rebuild) {
      mews::Engine engine(cfg);
      engine.rebuild_index();
      spdlog::info("index rebuilt at seq {}", engine.last_seq());
      return 0;
    }
  } catch (const mews::Error& e) {
    spdlog::error("{}: {}", mews::to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
