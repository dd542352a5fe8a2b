#include "mews/trends.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <fmt/format.h>

namespace mews {

std::optional<TrendAlert> evaluate_series(const Series& series, const std::string& cluster_id,
                                          Instant window_start, const ClusterFacts& facts,
                                          const TrendParams& params) {
  auto count_at = [&](Instant w) {
    const auto it = series.find(w);
    if (it == series.end()) return 0;
    int n = 0;
    for (const auto& [p, c] : it->second) n += c;
    return n;
  };

  const int count = count_at(window_start);
  if (count < params.min_count) return std::nullopt;

  const int n = params.baseline_windows;
  double sum = 0;
  std::vector<int> baseline(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    baseline[static_cast<std::size_t>(k - 1)] = count_at(window_start - k * params.window);
    sum += baseline[static_cast<std::size_t>(k - 1)];
  }
  const double mean = n > 0 ? sum / n : 0.0;
  double ss = 0;
  for (int b : baseline) ss += (b - mean) * (b - mean);
  const double sd = n > 0 ? std::sqrt(ss / n) : 0.0;
  const double z = (count - mean) / std::max(sd, params.sigma_floor);
  if (z < params.z_threshold) return std::nullopt;

  TrendAlert alert;
  alert.id = fmt::format("{}@{}", cluster_id, window_start.time_since_epoch().count());
  alert.cluster_id = cluster_id;
  alert.window_start = window_start;
  alert.count = count;
  alert.baseline_mean = mean;
  alert.baseline_std = sd;
  alert.zscore = z;
  for (const auto& [p, c] : series.at(window_start)) {
    if (c > 0) alert.platforms.insert(p);
  }
  alert.cross_platform = alert.platforms.size() >= 2;
  alert.novel_manipulation = facts.manipulated && window_start - facts.created_at <= params.novelty;
  return alert;
}

Instant TrendTracker::align(Instant t) const noexcept {
  const auto len = params_.window.count();
  auto s = t.time_since_epoch().count();
  auto r = s % len;
  if (r < 0) r += len;
  return Instant{Seconds{s - r}};
}

void TrendTracker::register_cluster(const std::string& cluster_id) { series_.try_emplace(cluster_id); }

void TrendTracker::mark_dirty(const std::string& cluster_id, Instant window_start) {
  // The window itself and every window whose baseline it feeds.
  for (int k = 0; k <= params_.baseline_windows; ++k) {
    dirty_.emplace(window_start + k * params_.window, cluster_id);
  }
}

void TrendTracker::record_observation(const std::string& cluster_id, Platform platform, Instant timestamp) {
  const auto it = series_.find(cluster_id);
  if (it == series_.end()) throw Error(ErrorCode::UnknownCluster, fmt::format("unknown cluster {}", cluster_id));
  const Instant w = align(timestamp);
  ++it->second[w][platform];
  mark_dirty(cluster_id, w);
}

void TrendTracker::merge(const std::string& survivor, const std::string& absorbed) {
  if (survivor == absorbed) return;
  auto src = series_.find(absorbed);
  if (src == series_.end()) throw Error(ErrorCode::UnknownCluster, fmt::format("unknown cluster {}", absorbed));
  Series& dst = series_[survivor];
  for (const auto& [w, counts] : src->second) {
    for (const auto& [p, c] : counts) dst[w][p] += c;
  }
  series_.erase(src);
  // A burst already alerted under either id is not re-reported for the merged cluster.
  for (auto it = alerted_.lower_bound({absorbed, Instant::min()});
       it != alerted_.end() && it->first == absorbed; ++it) {
    alerted_.emplace(survivor, it->second);
  }
  for (const auto& [w, counts] : dst) mark_dirty(survivor, w);
}

std::optional<TrendAlert> TrendTracker::evaluate_window(const std::string& cluster_id, Instant window_start,
                                                        Instant now, const ClusterFacts& facts) const {
  const auto it = series_.find(cluster_id);
  if (it == series_.end()) throw Error(ErrorCode::UnknownCluster, fmt::format("unknown cluster {}", cluster_id));
  if (window_start + params_.window > now) return std::nullopt;
  if (alerted_.count({cluster_id, window_start}) != 0) return std::nullopt;
  auto alert = evaluate_series(it->second, cluster_id, window_start, facts, params_);
  if (alert) alert->triggered_at = now;
  return alert;
}

void TrendTracker::record_alert(const TrendAlert& alert) {
  if (!alerted_.emplace(alert.cluster_id, alert.window_start).second) return;
  alerts_.push_back(alert);
}

std::vector<TrendAlert> TrendTracker::alert_feed(Instant since) const {
  std::vector<TrendAlert> out;
  for (const auto& a : alerts_) {
    if (a.triggered_at >= since) out.push_back(a);
  }
  std::stable_sort(out.begin(), out.end(), [](const TrendAlert& x, const TrendAlert& y) {
    return std::tie(x.triggered_at, x.cluster_id) < std::tie(y.triggered_at, y.cluster_id);
  });
  return out;
}

const Series& TrendTracker::series(const std::string& cluster_id) const {
  const auto it = series_.find(cluster_id);
  if (it == series_.end()) throw Error(ErrorCode::UnknownCluster, fmt::format("unknown cluster {}", cluster_id));
  return it->second;
}

void TrendTracker::restore(std::map<std::string, Series> series, std::set<std::pair<std::string, Instant>> alerted,
                           std::vector<TrendAlert> alerts) {
  series_ = std::move(series);
  alerted_ = std::move(alerted);
  alerts_ = std::move(alerts);
  dirty_.clear();
  mark_all_dirty();
}

void TrendTracker::mark_all_dirty() {
  for (const auto& [cluster, s] : series_) {
    for (const auto& [w, counts] : s) mark_dirty(cluster, w);
  }
}

}  // namespace mews
