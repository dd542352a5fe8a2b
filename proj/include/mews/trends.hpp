#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mews/common.hpp"

namespace mews {

struct TrendParams {
  Seconds window{3600};
  int baseline_windows = 24;
  int min_count = 5;
  double z_threshold = 3.0;
  double sigma_floor = 1.0;
  Seconds novelty{7 * 24 * 3600};
};

struct TrendAlert {
  std::string id;  // "<cluster_id>@<window_start epoch seconds>"
  std::string cluster_id;
  Instant window_start;
  int count = 0;
  double baseline_mean = 0;
  double baseline_std = 0;
  double zscore = 0;
  std::set<Platform> platforms;
  bool cross_platform = false;
  bool novel_manipulation = false;
  Instant triggered_at;

  friend bool operator==(const TrendAlert&, const TrendAlert&) = default;
};

// Per-window platform counts for one cluster.
using WindowCounts = std::map<Platform, int>;
using Series = std::map<Instant, WindowCounts>;

// Cluster facts the tracker needs but does not own.
struct ClusterFacts {
  bool manipulated = false;
  Instant created_at;
};

// Pure burst test over a series; nullopt when the gate is not met.
std::optional<TrendAlert> evaluate_series(const Series& series, const std::string& cluster_id,
                                          Instant window_start, const ClusterFacts& facts,
                                          const TrendParams& params);

// Event-time windowed observation counts per cluster, plus the alert feed.
//
// Windows become evaluable once the watermark (latest post timestamp seen)
// passes their end. A set of dirty (cluster, window) pairs tracks what may
// have changed since it was last evaluated; it is derived data and is rebuilt
// wholesale by mark_all_dirty() after a restore.
class TrendTracker {
 public:
  explicit TrendTracker(TrendParams params = {}) : params_(params) {}

  const TrendParams& params() const noexcept { return params_; }
  Instant align(Instant t) const noexcept;

  void register_cluster(const std::string& cluster_id);
  bool has_cluster(const std::string& cluster_id) const { return series_.count(cluster_id) != 0; }
  // Throws Error(UnknownCluster).
  void record_observation(const std::string& cluster_id, Platform platform, Instant timestamp);
  // Sums the absorbed series into the survivor and drops the absorbed one.
  void merge(const std::string& survivor, const std::string& absorbed);

  // Throws Error(UnknownCluster). Returns nullopt if the window has not
  // elapsed at `now`, was already alerted, or does not pass the gate.
  std::optional<TrendAlert> evaluate_window(const std::string& cluster_id, Instant window_start,
                                            Instant now, const ClusterFacts& facts) const;

  // Evaluates every dirty window that has elapsed at `watermark` and clears
  // it from the dirty set. Alerts are returned, not recorded.
  template <typename FactsFn>
  std::vector<TrendAlert> sweep(Instant watermark, FactsFn&& facts_of);

  void record_alert(const TrendAlert& alert);
  // triggered_at >= since, ordered by (triggered_at, cluster_id).
  std::vector<TrendAlert> alert_feed(Instant since) const;
  const std::vector<TrendAlert>& alerts() const noexcept { return alerts_; }

  const Series& series(const std::string& cluster_id) const;
  const std::set<std::pair<std::string, Instant>>& alerted() const noexcept { return alerted_; }
  // Replaces all state (snapshot restore) and marks everything dirty.
  void restore(std::map<std::string, Series> series, std::set<std::pair<std::string, Instant>> alerted,
               std::vector<TrendAlert> alerts);
  const std::map<std::string, Series>& all_series() const noexcept { return series_; }
  std::size_t dirty_count() const noexcept { return dirty_.size(); }
  void mark_all_dirty();

 private:
  void mark_dirty(const std::string& cluster_id, Instant window_start);

  TrendParams params_;
  std::map<std::string, Series> series_;
  std::set<std::pair<std::string, Instant>> alerted_;
  std::vector<TrendAlert> alerts_;
  std::set<std::pair<Instant, std::string>> dirty_;
};

template <typename FactsFn>
std::vector<TrendAlert> TrendTracker::sweep(Instant watermark, FactsFn&& facts_of) {
  std::vector<TrendAlert> out;
  auto it = dirty_.begin();
  while (it != dirty_.end() && it->first + params_.window <= watermark) {
    const auto& [start, cluster] = *it;
    if (series_.count(cluster) != 0 && alerted_.count({cluster, start}) == 0) {
      if (auto alert = evaluate_series(series_.at(cluster), cluster, start, facts_of(cluster), params_)) {
        alert->triggered_at = watermark;
        out.push_back(std::move(*alert));
      }
    }
    it = dirty_.erase(it);
  }
  return out;
}

}  // namespace mews
