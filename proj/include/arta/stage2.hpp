#pragma once

// Stage 2: top-down refinement of the mixed-resolution set, finest scale
// first. Round 1 attends over every level and emits level 3; rounds 2 and 3
// fuse a stage-1 lateral, attend, and emit levels 2 and 1; round 4 fuses the
// pre-allocation lateral and runs plain ViT blocks over the level-0 tokens.

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "arta/stage1.hpp"

namespace arta::stage2 {

struct Output {
  // emitted[l]: rows of level l in the stage-1 layout (padding included).
  std::array<Var, geom::kLevels> emitted;
  // Densified finest-scale grid, [batch·cells × stage2_dims[0]], cells of a
  // sample in row-major order over (H/4)×(W/4).
  Var dense;
  std::uint64_t comparisons = 0;
};

void init_parameters(ParameterSet& ps, const EncoderConfig& cfg, Rng& rng);

// Concatenates current and lateral features per row and maps them back to
// the current width with the linear layer `prefix`. Keys must agree row for
// row (ContractError otherwise).
Var lateral_fuse(Binder& b, const std::string& prefix, Var current,
                 std::span<const geom::TokenKey> current_keys, Var lateral,
                 std::span<const geom::TokenKey> lateral_keys);

Output run_stage2(Binder& b, const EncoderConfig& cfg, const stage1::Output& s1,
                  const stage1::Options& opt = {});

// Per sample, per 4×4 cell: the feature of the finest covering token,
// aligned to the finest emitted width, plus a learned per-cell position.
Var densify_finest(Binder& b, const EncoderConfig& cfg, std::span<const geom::TokenSet> sets,
                   const stage1::LevelLayout& layout, const std::array<Var, geom::kLevels>& emitted);

// One sample's emitted maps, exportable for downstream tools.
//   magic "ARTAEMT\0", version u32, scale count u32 (4), then per level:
//   level u32, count u64, width u64, keys (row u32, col u32) × count,
//   features f64 × count·width; little-endian.
struct EmittedMaps {
  std::array<std::vector<geom::TokenKey>, geom::kLevels> keys;
  std::array<Tensor, geom::kLevels> features;
  bool operator==(const EmittedMaps&) const = default;
};

EmittedMaps extract(const Tape& t, const Output& out, std::span<const geom::TokenSet> sets,
                    const stage1::LevelLayout& layout, int sample);
void write_emitted(std::ostream& os, const EmittedMaps& maps);
EmittedMaps read_emitted(std::istream& is);

}  // namespace arta::stage2
