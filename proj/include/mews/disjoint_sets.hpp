#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace mews {

// Union-find with path halving and union by size. The caller picks which
// root survives a union, so external ids can follow their own policy.
template <typename Index = std::size_t>
class DisjointSets {
 public:
  Index add() {
    const auto id = static_cast<Index>(parent_.size());
    parent_.push_back(id);
    size_.push_back(1);
    return id;
  }

  std::size_t element_count() const noexcept { return parent_.size(); }

  Index find(Index x) noexcept {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  Index find(Index x) const noexcept {
    while (parent_[x] != x) x = parent_[x];
    return x;
  }

  std::size_t set_size(Index x) const noexcept { return size_[find(x)]; }

  // Merges the sets of `survivor` and `other`; the root of `survivor`'s set
  // stays the root. Returns false if they were already joined.
  bool unite_into(Index survivor, Index other) noexcept {
    const Index keep = find(survivor);
    const Index drop = find(other);
    if (keep == drop) return false;
    parent_[drop] = keep;
    size_[keep] += size_[drop];
    return true;
  }

 private:
  std::vector<Index> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace mews
