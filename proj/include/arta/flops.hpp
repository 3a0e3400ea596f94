#pragma once

// Per-image compute accounting.
//
// Convention: one multiply-accumulate is 2 FLOPs; every scalar exp, tanh,
// sqrt or division is 1 FLOP. Only valid tokens are counted. Region names
// match the ones the forward pass reports to an installed OpCounter, so the
// analytic count can be compared with the instrumented one region by region.

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arta/config.hpp"
#include "arta/stage1.hpp"
#include "arta/tensor.hpp"

namespace arta::flops {

struct FlopsReport {
  std::vector<std::pair<std::string, OpTally>> regions;  // execution order, zero regions omitted
  OpTally stage1, stage2, head, total;
  std::uint64_t comparisons = 0;  // clustering sort comparisons, not FLOPs

  OpTally region(const std::string& name) const;
};

// Analytic count for one image from its allocation trace and final
// per-level token counts.
FlopsReport count_forward(const EncoderConfig& cfg, const stage1::AllocationTrace& trace,
                          const std::array<std::size_t, 4>& counts);

// Groups an instrumented count the same way.
FlopsReport from_counter(const OpCounter& counter);

// Sum over tokens of their attention-neighbourhood size when n tokens are cut
// into runs of `cluster_size` and each attends to its own and adjacent runs.
std::uint64_t neighborhood_volume(std::uint64_t n, std::uint64_t cluster_size);

struct Stats {
  double mean = 0;
  double std = 0;  // population
};
// Throws InputError on an empty corpus.
Stats corpus_stats(std::span<const double> totals);
Stats corpus_stats(std::span<const FlopsReport> reports);

}  // namespace arta::flops
