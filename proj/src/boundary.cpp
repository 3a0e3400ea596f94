#include "arta/boundary.hpp"

#include <algorithm>

namespace arta {

std::size_t BoundaryMap::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

BoundaryMap boundary_map(const LabelMap& labels, Connectivity conn) {
  static constexpr int kDx[] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int neighbours = conn == Connectivity::eight ? 8 : 4;
  const int h = labels.height, w = labels.width;
  BoundaryMap out{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint16_t self = labels.at(y, x);
      if (self == LabelMap::kIgnore) continue;
      for (int n = 0; n < neighbours; ++n) {
        const int nx = x + kDx[n], ny = y + kDy[n];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::uint16_t other = labels.at(ny, nx);
        if (other != LabelMap::kIgnore && other != self) {
          out.bits[static_cast<std::size_t>(y) * w + x] = 1;
          break;
        }
      }
    }
  }
  return out;
}

std::vector<double> target_scores(const BoundaryMap& bmap, std::span<const geom::TokenKey> tokens) {
  const int h = bmap.height, w = bmap.width;
  // Summed-area table with a zero border row/column.
  std::vector<std::int64_t> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  auto at = [&](int y, int x) -> std::int64_t& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) at(y + 1, x + 1) = bmap.at(y, x) + at(y, x + 1) + at(y + 1, x) - at(y, x);

  std::vector<double> scores;
  scores.reserve(tokens.size());
  for (const auto& t : tokens) {
    const geom::Rect r = t.rect();
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > w || r.y1 > h)
      throw ContractError("token " + geom::to_string(t) + " extends outside the boundary map");
    const std::int64_t n = at(r.y1, r.x1) - at(r.y0, r.x1) - at(r.y1, r.x0) + at(r.y0, r.x0);
    scores.push_back(static_cast<double>(n) / static_cast<double>(r.area()));
  }
  return scores;
}

double allocator_loss(std::span<const double> pred, std::span<const double> target,
                      std::span<const std::uint8_t> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw DimensionError("allocator_loss: prediction, target and mask lengths differ");
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    s += (pred[i] - target[i]) * (pred[i] - target[i]);
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

LabelMap pad_labels(const LabelMap& labels, int height, int width) {
  if (height < labels.height || width < labels.width)
    throw InputError("pad_labels: target smaller than the label map");
  LabelMap out(height, width, LabelMap::kIgnore);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) out.at(y, x) = labels.at(y, x);
  return out;
}

}  // namespace arta
