#pragma once

// Stage 1: the adaptive allocator.
//
// A batch is processed as one matrix per step. Rows are grouped by level,
// then by sample; each sample owns `capacity[level]` consecutive rows of a
// level, of which the first `counts[level][sample]` are real tokens and the
// rest are padding. Padding rows carry arbitrary values: they are never
// attended to, scored, gathered from, or counted in a loss.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "arta/boundary.hpp"
#include "arta/clusterattn.hpp"
#include "arta/config.hpp"
#include "arta/geometry.hpp"
#include "arta/image_io.hpp"
#include "arta/params.hpp"

namespace arta::stage1 {

struct LevelLayout {
  int batch = 0;
  std::array<std::size_t, geom::kLevels> capacity{};
  std::array<std::vector<std::size_t>, geom::kLevels> counts;   // [level][sample]
  std::array<std::vector<std::uint8_t>, geom::kLevels> masks;   // [level][sample·cap + i]

  std::size_t offset(int level) const;
  // Rows of levels 0..top.
  std::size_t rows(int top) const { return offset(top + 1); }
  std::size_t row(int level, int sample, std::size_t i) const {
    return offset(level) + static_cast<std::size_t>(sample) * capacity[level] + i;
  }
  // Per-row views over levels 0..top.
  std::vector<std::uint8_t> valid(int top) const;
  std::vector<std::int32_t> sample_of(int top) const;
  std::vector<int> levels(int top) const;
};

// Pads every level to the largest per-sample count in the batch.
LevelLayout pad_and_mask(std::span<const geom::TokenSet> sets);

// Keys of rows of levels 0..top; padding rows get {level, -1, -1}.
std::vector<geom::TokenKey> row_keys(std::span<const geom::TokenSet> sets, const LevelLayout& layout,
                                     int top);

struct RoundTrace {
  int round = 0;                        // 1..3
  std::size_t candidates = 0;           // N_r: frontier size
  std::vector<double> scores;           // predicted c_i, frontier order
  std::vector<double> targets;          // boundary fractions; empty without labels
  std::vector<std::uint32_t> selected;  // frontier indices, ascending
  std::size_t k = 0;                    // K_r = |selected|
  bool oracle = false;                  // selection used targets instead of scores
  bool operator==(const RoundTrace&) const = default;
};

struct AllocationTrace {
  std::array<RoundTrace, 3> rounds;
  bool operator==(const AllocationTrace&) const = default;
};

// Indices i with scores[i] > tau, ascending.
std::vector<std::uint32_t> select(std::span<const double> scores, double tau);

// round(ratio·n) indices drawn without replacement, ascending. The draw is a
// pure function of (seed, sample_id, round).
std::vector<std::uint32_t> random_select(std::size_t n, double ratio, std::uint64_t seed,
                                         std::uint64_t sample_id, int round);

// True when training batch `batch_index` should select with ground-truth
// scores.
bool oracle_mix_gate(double rate, std::uint64_t seed, std::uint64_t batch_index);

struct Input {
  // Images and label maps already padded to multiples of 32, all the same size.
  std::vector<const Image*> images;
  std::vector<const LabelMap*> labels;  // empty, or one per image
  std::vector<std::uint64_t> sample_ids;
};

struct Options {
  bool training = false;
  std::uint64_t batch_index = 0;
  // Test hook: adds N(0, pad_noise²) to every padding row as it is created.
  double pad_noise = 0.0;
  std::uint64_t pad_noise_seed = 0;
};

struct Output {
  std::vector<geom::TokenSet> sets;
  std::vector<AllocationTrace> traces;
  LevelLayout layout;
  Var tokens;                  // levels 0..3, final stage-1 width
  std::array<Var, 3> laterals;  // laterals[r]: levels 0..r, width of round r
  Var alloc_loss;              // mean over rounds of the MSE on scored valid tokens; invalid without labels
  std::uint64_t comparisons = 0;
};

void init_parameters(ParameterSet& ps, const EncoderConfig& cfg, Rng& rng);

// Patch embedding plus absolute position embedding, [batch·G × d0].
Var coarse_embed(Binder& b, const EncoderConfig& cfg, std::span<const Image* const> images);

// Full self-attention ViT blocks within each sample of `batch` equal groups.
Var pre_allocation_vit(Binder& b, const EncoderConfig& cfg, Var x, int batch);

// Sigmoid scores [n×1] for frontier features of round `round`.
Var score(Binder& b, const EncoderConfig& cfg, int round, Var frontier);

// Features of new children at level `round`. `parent_rows[j]` indexes the
// projected parent row of child j in `parents` (-1 for padding), `keys[j]` is
// the child key (level -1 for padding) and `sample_of[j]` its image.
Var allocate(Binder& b, const EncoderConfig& cfg, int round, Var parents,
             std::span<const std::int64_t> parent_rows, std::span<const geom::TokenKey> keys,
             std::span<const std::int32_t> sample_of, std::span<const Image* const> images);

Output run_stage1(Binder& b, const EncoderConfig& cfg, const Input& in, const Options& opt = {});

// Attention neighbourhoods over rows of levels 0..top: clustered per sample.
cluster::ClusterAssignment cluster_rows(const EncoderConfig& cfg, std::span<const geom::TokenSet> sets,
                                        const LevelLayout& layout, int top);
// Every valid row of a level attends to all valid rows of its sample's level.
Neighborhoods global_rows(const LevelLayout& layout, int level);

// Adds the padding-noise hook to rows of `level` (no-op when disabled).
Var add_pad_noise(Tape& t, Var x, const LevelLayout& layout, int level, const Options& opt, std::uint64_t tag);

// Row-major flattening (y, x, channel) of a square image patch.
void flatten_patch(const Image& img, const geom::Rect& r, std::span<double> out);

}  // namespace arta::stage1
