#pragma once

// Synthetic segmentation scenes: axis-aligned rectangles and ellipses of
// random classes composited over a background class, rendered with one flat
// colour per class plus Gaussian noise.

#include <array>
#include <cstdint>
#include <vector>

#include "arta/boundary.hpp"
#include "arta/image_io.hpp"

namespace arta {

struct SceneSpec {
  int height = 64;
  int width = 64;
  int min_regions = 0;
  int max_regions = 3;
  int num_classes = 4;  // class 0 is the background
  int min_half = 6;     // half-extent range of a region, pixels
  int max_half = 20;
  double noise = 0.03;
};

struct Region {
  enum class Shape { rect, ellipse };
  Shape shape = Shape::rect;
  std::uint16_t label = 0;
  // Centre and half-extents in pixel units; pixel (x, y) is sampled at its
  // centre (x + 0.5, y + 0.5).
  double cx = 0, cy = 0, hx = 0, hy = 0;

  bool contains(int x, int y) const;
};

struct SyntheticScene {
  std::vector<Region> regions;
  LabelMap labels;
  Image image;
};

// Deterministic per (seed, spec).
SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec);
// Same as above with the region count fixed.
SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec, int regions);

// Label map recomputed from region geometry alone.
LabelMap rasterize(const std::vector<Region>& regions, int height, int width);

// Flat colour of a class in [0,1]³.
std::array<double, 3> class_color(std::uint16_t label);

// n scenes; every fourth one (index 0, 4, 8, ...) has no regions, the others
// draw their region count from [max(1, min_regions), max_regions].
std::vector<SyntheticScene> generate_corpus(std::uint64_t seed, std::size_t n, const SceneSpec& spec);

}  // namespace arta
