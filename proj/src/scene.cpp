#include "arta/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "arta/rng.hpp"

namespace arta {

bool Region::contains(int x, int y) const {
  const double px = x + 0.5, py = y + 0.5;
  if (shape == Shape::rect) return std::abs(px - cx) < hx && std::abs(py - cy) < hy;
  const double u = (px - cx) / hx, v = (py - cy) / hy;
  return u * u + v * v <= 1.0;
}

std::array<double, 3> class_color(std::uint16_t label) {
  static constexpr std::array<std::array<double, 3>, 8> kPalette{{
      {0.15, 0.15, 0.20},
      {0.85, 0.25, 0.20},
      {0.20, 0.70, 0.30},
      {0.25, 0.35, 0.85},
      {0.90, 0.80, 0.20},
      {0.70, 0.30, 0.80},
      {0.20, 0.80, 0.85},
      {0.95, 0.60, 0.40},
  }};
  if (label < kPalette.size()) return kPalette[label];
  // Beyond the palette: a hashed colour, still a pure function of the label.
  const std::uint64_t h = Rng::mix(label);
  return {((h >> 8) & 0xff) / 255.0, ((h >> 24) & 0xff) / 255.0, ((h >> 40) & 0xff) / 255.0};
}

LabelMap rasterize(const std::vector<Region>& regions, int height, int width) {
  LabelMap m(height, width, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (const Region& r : regions)
        if (r.contains(x, y)) m.at(y, x) = r.label;
  return m;
}

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec, int regions) {
  if (spec.height <= 0 || spec.width <= 0) throw InputError("scene: size must be positive");
  if (spec.num_classes < 2) throw InputError("scene: need at least two classes");
  if (regions < 0) throw InputError("scene: region count must be non-negative");
  if (spec.min_half < 1 || spec.max_half < spec.min_half) throw InputError("scene: bad region size range");
  Rng rng(seed);
  Rng geo = rng.split(1), pix = rng.split(2);
  SyntheticScene s;
  for (int i = 0; i < regions; ++i) {
    Region r;
    r.shape = geo.bernoulli(0.5) ? Region::Shape::rect : Region::Shape::ellipse;
    r.label = static_cast<std::uint16_t>(1 + geo.below(static_cast<std::uint64_t>(spec.num_classes - 1)));
    r.cx = geo.uniform(0.0, spec.width);
    r.cy = geo.uniform(0.0, spec.height);
    r.hx = geo.uniform(spec.min_half, spec.max_half);
    r.hy = geo.uniform(spec.min_half, spec.max_half);
    s.regions.push_back(r);
  }
  s.labels = rasterize(s.regions, spec.height, spec.width);
  s.image = Image(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const auto c = class_color(s.labels.at(y, x));
      for (int ch = 0; ch < 3; ++ch)
        s.image.at(y, x, ch) = std::clamp(c[ch] + spec.noise * pix.normal(), 0.0, 1.0);
    }
  return s;
}

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  if (spec.min_regions < 0 || spec.max_regions < spec.min_regions)
    throw InputError("scene: bad region count range");
  Rng rng(seed);
  const auto span = static_cast<std::uint64_t>(spec.max_regions - spec.min_regions + 1);
  return generate_scene(seed, spec, spec.min_regions + static_cast<int>(rng.split(0).below(span)));
}

std::vector<SyntheticScene> generate_corpus(std::uint64_t seed, std::size_t n, const SceneSpec& spec) {
  const Rng root(seed);
  const int lo = std::max(1, spec.min_regions);
  if (spec.max_regions < lo) throw InputError("scene: max_regions must be at least 1 for a corpus");
  std::vector<SyntheticScene> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = root.split(i);
    const std::uint64_t scene_seed = r.next_u64();
    const int regions =
        i % 4 == 0 ? 0 : lo + static_cast<int>(r.below(static_cast<std::uint64_t>(spec.max_regions - lo + 1)));
    out.push_back(generate_scene(scene_seed, spec, regions));
  }
  return out;
}

}  // namespace arta
