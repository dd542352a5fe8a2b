#pragma once

// Randomized invariant checks shared by the property suite and the
// acceptance runner. Each returns how many cases ran and the first failure.

#include <cstdint>
#include <string>

namespace mews::test {

struct PropertyResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  std::string first_failure;

  bool ok() const { return cases > 0 && failures == 0; }
};

PropertyResult check_hamming_metric(std::uint64_t seed, int cases);
PropertyResult check_partition_invariant(std::uint64_t seed, int cases);
PropertyResult check_verdict_monotonicity(std::uint64_t seed, int cases);
PropertyResult check_window_alignment(std::uint64_t seed, int cases);
PropertyResult check_seq_gapless(std::uint64_t seed, int cases);

}  // namespace mews::test
