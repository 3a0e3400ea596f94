#pragma once

// Random inputs shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <vector>

#include "arta/boundary.hpp"
#include "arta/geometry.hpp"
#include "arta/rng.hpp"

namespace fixtures {

// Three allocation rounds, each selecting every frontier token with
// probability p.
inline arta::geom::TokenSet random_set(arta::Rng& rng, int height, int width, double p) {
  auto set = arta::geom::coarse_grid(height, width);
  for (int r = 0; r < 3; ++r) {
    std::vector<std::uint32_t> sel;
    for (std::size_t i = 0; i < set.frontier().size(); ++i)
      if (rng.bernoulli(p)) sel.push_back(static_cast<std::uint32_t>(i));
    set.allocate(sel);
  }
  return set;
}

// Blocky label map with a few classes and occasional ignored pixels.
inline arta::LabelMap random_labels(arta::Rng& rng, int height, int width, int classes, double ignore = 0.05) {
  arta::LabelMap m(height, width);
  const int block = 1 + static_cast<int>(rng.below(4));
  std::vector<std::uint16_t> tiles(static_cast<std::size_t>((height / block + 1) * (width / block + 1)));
  for (auto& t : tiles) t = static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(classes)));
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      m.at(y, x) = tiles[static_cast<std::size_t>((y / block) * (width / block + 1) + x / block)];
      if (rng.bernoulli(ignore)) m.at(y, x) = arta::LabelMap::kIgnore;
    }
  return m;
}

}  // namespace fixtures
