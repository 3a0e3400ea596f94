#pragma once

#include <cstdint>
#include <vector>

namespace arta {

// Counter-based generator: the n-th draw is a pure function of (key, n), and
// split() derives independent child streams from a label, so results do not
// depend on how work is divided across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc908ull)) {}

  Rng split(std::uint64_t label) const { return Rng(key_, label); }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // First k entries of a uniformly random permutation of [0, n), k ≤ n.
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k);

  static std::uint64_t mix(std::uint64_t z);

 private:
  Rng(std::uint64_t parent_key, std::uint64_t label)
      : key_(mix(parent_key ^ mix(label + 0xbb67ae8584caa73bull))) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace arta
