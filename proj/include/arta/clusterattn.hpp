#pragma once

// Local attention over sparse mixed-resolution token sets.
//
// Tokens of each sample are laid along the Morton curve (canonical order) and
// cut into contiguous runs of `cluster_size`; the last run may be short. A
// token attends to its own run and to the runs directly before and after it.
// Keys are always visited in canonical order, so outputs do not depend on how
// the caller ordered its rows.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arta/geometry.hpp"
#include "arta/params.hpp"
#include "arta/rng.hpp"

namespace arta::cluster {

struct ClusterAssignment {
  // Per input row: cluster id within its sample, -1 for invalid rows.
  std::vector<std::int32_t> cluster_of;
  // Per sample, per cluster: member rows in canonical order.
  std::vector<std::vector<std::vector<std::uint32_t>>> members;
  // Per input row: attention keys (rows); empty for invalid rows.
  Neighborhoods neighborhoods;
  // Key comparisons spent ordering tokens (reported apart from FLOPs).
  std::uint64_t comparisons = 0;
};

// `sample_of` may be empty (one sample); `valid` may be empty (all valid).
ClusterAssignment cluster(std::span<const geom::TokenKey> keys, int cluster_size,
                          std::span<const std::int32_t> sample_of = {},
                          std::span<const std::uint8_t> valid = {});

// Cluster sizes for n tokens: full runs of cluster_size, then the remainder.
std::vector<std::size_t> cluster_sizes(std::size_t n, std::size_t cluster_size);

struct BlockSpec {
  std::string prefix;
  int dim = 0;
  int heads = 1;
  int mlp_hidden = 0;
  // Adds a learned per-level offset to keys (cluster blocks); plain ViT
  // blocks leave it off.
  bool level_keys = true;
  double eps = 1e-5;
};

void init_block(ParameterSet& ps, const BlockSpec& spec, Rng& rng);

// Pre-norm transformer block:
//   x ← x + Wo·Attn(LN₁x)   (keys restricted to `nb`)
//   x ← x + MLP(LN₂x)
// `levels` gives each row's scale level (used only with level_keys). Rows
// flagged in `valid` (empty = all) must have a non-empty neighbourhood;
// other rows get a zero attention term.
Var attention_block(Binder& b, const BlockSpec& spec, Var x, const Neighborhoods& nb,
                    std::span<const int> levels, std::span<const std::uint8_t> valid = {});

}  // namespace arta::cluster
