#pragma once

// Shared helpers for the test binaries: scratch directories, corpus files,
// and brute-force reference implementations used as oracles.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mews/engine.hpp"
#include "mews/synth.hpp"

namespace mews::test {

namespace fs = std::filesystem;

// Removed on destruction unless MEWS_KEEP_TMP is set.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "mews") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    if (std::getenv("MEWS_KEEP_TMP") == nullptr) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline void write_bytes(const fs::path& p, ByteView bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_corpus(const fs::path& dir, const synth::Corpus& corpus) {
  for (const auto& im : corpus.images) write_bytes(dir / im.name, im.bytes);
}

// Engine config rooted in `dir` with small segments so tests cross segment
// boundaries.
inline EngineConfig test_config(const fs::path& data_root, const fs::path& media_root = {}) {
  EngineConfig cfg;
  cfg.data_root = data_root;
  cfg.media_root = media_root.empty() ? data_root : media_root;
  cfg.workers = 2;
  return cfg;
}

inline Instant at(const char* rfc3339) { return *parse_rfc3339(rfc3339); }

// Connected components by repeated BFS; each component sorted, the list sorted.
template <typename Node>
std::vector<std::vector<Node>> components(const std::vector<Node>& nodes,
                                          const std::vector<std::pair<Node, Node>>& edges) {
  std::map<Node, std::vector<Node>> adj;
  for (const auto& n : nodes) adj[n];
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::set<Node> seen;
  std::vector<std::vector<Node>> out;
  for (const auto& [start, _] : adj) {
    if (seen.count(start)) continue;
    std::vector<Node> comp;
    std::vector<Node> stack{start};
    seen.insert(start);
    while (!stack.empty()) {
      Node n = stack.back();
      stack.pop_back();
      comp.push_back(n);
      for (const auto& m : adj[n]) {
        if (seen.insert(m).second) stack.push_back(m);
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Partition of a ClusterSet in the same shape as components().
inline std::vector<std::vector<ContentHash>> partition_of(const ClusterSet& set) {
  std::vector<std::vector<ContentHash>> out;
  for (const auto& [id, c] : set.clusters()) out.emplace_back(c.members.begin(), c.members.end());
  std::sort(out.begin(), out.end());
  return out;
}

// Adjusted Rand index from the contingency table of two labelings.
inline double adjusted_rand_index(const std::vector<int>& truth, const std::vector<int>& pred) {
  auto c2 = [](double n) { return n * (n - 1) / 2.0; };
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    table[{truth[i], pred[i]}] += 1;
    rows[truth[i]] += 1;
    cols[pred[i]] += 1;
  }
  double index = 0;
  double sum_rows = 0;
  double sum_cols = 0;
  for (const auto& [k, n] : table) index += c2(n);
  for (const auto& [k, n] : rows) sum_rows += c2(n);
  for (const auto& [k, n] : cols) sum_cols += c2(n);
  const double expected = sum_rows * sum_cols / c2(static_cast<double>(truth.size()));
  const double max_index = (sum_rows + sum_cols) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace mews::test
