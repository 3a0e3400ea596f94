#pragma once

// The full encoder: stage 1, stage 2, densify, and the per-cell sanity head.

#include <cstdint>
#include <vector>

#include "arta/stage2.hpp"

namespace arta {

struct Sample {
  Image image;       // padded to the config's 32-multiple size
  LabelMap labels;   // same size; may be empty (height 0) at inference
  std::uint64_t id = 0;
};

// Pads an image/label pair (labels with IGNORE) up to multiples of 32.
Sample make_sample(const Image& image, const LabelMap& labels, std::uint64_t id);

ParameterSet init_parameters(const EncoderConfig& cfg, std::uint64_t seed);

// Majority label of every 4×4 cell (ties → smaller id), -1 when a cell holds
// only ignored pixels.
std::vector<std::int32_t> cell_labels(const LabelMap& labels);

struct ForwardOptions {
  stage1::Options stage1;
  // Skips stage 2, densify and the head (allocator-only training).
  bool allocator_only = false;
};

struct SampleResult {
  geom::TokenSet tokens;
  stage1::AllocationTrace trace;
  stage2::EmittedMaps emitted;  // empty when allocator_only
  Tensor dense;                 // cells × width
  Tensor logits;                // cells × classes; empty without the head
};

struct ForwardResult {
  std::vector<SampleResult> samples;
  Var loss;        // alloc + head; invalid when no labels were given
  Var alloc_loss;
  Var head_loss;   // invalid without the head
  std::uint64_t comparisons = 0;
};

ForwardResult forward(Binder& b, const EncoderConfig& cfg, std::span<const Sample* const> batch,
                      const ForwardOptions& opt = {});

}  // namespace arta
