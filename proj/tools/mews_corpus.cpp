// mews-corpus: writes a synthetic corpus (images, feed.jsonl, truth.json) to a directory.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mews/codec.hpp"
#include "mews/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_bytes(const fs::path& p, const mews::Bytes& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

json box(const mews::Box& b) { return json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}}; }

void write_feed(const fs::path& dir, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(dir / "feed.jsonl", text);
}

json write_corpus(const fs::path& dir, const mews::synth::Corpus& corpus) {
  json groups = json::object();
  for (const auto& im : corpus.images) {
    write_bytes(dir / im.name, im.bytes);
    groups[im.name] = im.group;
  }
  return groups;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic corpora for mews"};
  std::string kind;
  std::string out_dir;
  std::uint64_t seed = 1;
  int count = 0;
  app.add_option("kind", kind, "matching | clusters | copymove | splice | timeline")
      ->required()
      ->check(CLI::IsMember({"matching", "clusters", "copymove", "splice", "timeline"}));
  app.add_option("-o,--out", out_dir, "Output directory")->required();
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("-n,--count", count, "Number of forgeries (copymove, splice)");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const mews::Instant start{mews::Seconds{1622505600}};
    json truth{{"kind", kind}, {"seed", seed}};

    if (kind == "matching" || kind == "clusters") {
      const auto corpus = kind == "matching" ? mews::synth::matching_corpus(seed) : mews::synth::cluster_corpus(seed);
      truth["groups"] = write_corpus(dir, corpus);
      write_feed(dir, mews::synth::corpus_feed(corpus, start));
    } else if (kind == "copymove" || kind == "splice") {
      const int n = count > 0 ? count : 50;
      std::vector<std::string> names;
      json items = json::array();
      for (int i = 0; i < n; ++i) {
        const std::string name = fmt::format("{}_{:03}.png", kind, i);
        if (kind == "copymove") {
          const auto f = mews::synth::copy_move_forgery(seed * 1000 + i, {256, 256, 48, 96, 48});
          write_bytes(dir / name, mews::encode_png(f.image));
          items.push_back({{"image", name}, {"source", box(f.source)}, {"destination", box(f.destination)}});
        } else {
          const auto f = mews::synth::splice_forgery(seed * 1000 + i);
          write_bytes(dir / name, f.bytes);
          items.push_back({{"image", name}, {"mask", box(f.mask)}});
        }
        names.push_back(name);
      }
      truth["forgeries"] = std::move(items);
      std::vector<std::string> lines;
      for (std::size_t i = 0; i < names.size(); ++i) {
        lines.push_back(mews::synth::feed_line(fmt::format("f{:03}", i), "other", start + static_cast<int>(i) * mews::Seconds{60},
                                               kind + " sample", {names[i]}));
      }
      write_feed(dir, lines);
    } else {
      const auto t = mews::synth::trend_timeline(seed);
      truth["groups"] = write_corpus(dir, t.files);
      truth["planted_group"] = t.planted_group;
      truth["burst_window_start"] = mews::format_rfc3339(t.burst_start);
      write_feed(dir, t.lines);
    }
    write_text(dir / "truth.json", truth.dump(2) + "\n");
    std::cout << "wrote " << kind << " corpus to " << dir.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "mews-corpus: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
