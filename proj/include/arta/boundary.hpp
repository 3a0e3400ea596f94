#pragma once

// Class-boundary targets derived from segmentation labels.

#include <cstdint>
#include <span>
#include <vector>

#include "arta/geometry.hpp"

namespace arta {

struct LabelMap {
  static constexpr std::uint16_t kIgnore = 65535;

  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> labels;  // row-major

  LabelMap() = default;
  LabelMap(int h, int w, std::uint16_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint16_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const LabelMap&) const = default;
};

struct BoundaryMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool operator==(const BoundaryMap&) const = default;
};

enum class Connectivity { four = 4, eight = 8 };

// A labelled pixel is a boundary pixel when an in-bounds neighbour carries a
// different, non-ignored label. Ignored pixels are never boundaries and
// never make their neighbours boundaries.
BoundaryMap boundary_map(const LabelMap& labels, Connectivity conn = Connectivity::four);

// Fraction of boundary pixels inside each token's patch. Every token
// rectangle must lie inside the map.
std::vector<double> target_scores(const BoundaryMap& bmap, std::span<const geom::TokenKey> tokens);

// Mean squared error over entries whose mask is non-zero; 0 if none are.
double allocator_loss(std::span<const double> pred, std::span<const double> target,
                      std::span<const std::uint8_t> mask);

// Extends the map to padded dimensions (bottom/right) with ignored pixels.
LabelMap pad_labels(const LabelMap& labels, int height, int width);

}  // namespace arta
