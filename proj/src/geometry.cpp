#include "arta/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace arta::geom {

TokenKey TokenKey::parent() const {
  if (level <= 0) throw ContractError("level-0 token " + to_string(*this) + " has no parent");
  return {level - 1, row / 2, col / 2};
}

std::string to_string(const TokenKey& key) {
  return "(" + std::to_string(key.level) + "," + std::to_string(key.row) + "," +
         std::to_string(key.col) + ")";
}

std::array<TokenKey, 4> split(const TokenKey& parent) {
  if (parent.level < 0 || parent.level >= kFinestLevel)
    throw ContractError("cannot split " + to_string(parent) + ": 4×4 is the finest scale");
  const int l = parent.level + 1, r = parent.row * 2, c = parent.col * 2;
  return {{{l, r, c}, {l, r, c + 1}, {l, r + 1, c}, {l, r + 1, c + 1}}};
}

std::uint64_t interleave_bits(std::uint32_t x, std::uint32_t y) {
  auto spread = [](std::uint64_t v) {
    v &= 0xffffffffull;
    v = (v | (v << 16)) & 0x0000ffff0000ffffull;
    v = (v | (v << 8)) & 0x00ff00ff00ff00ffull;
    v = (v | (v << 4)) & 0x0f0f0f0f0f0f0f0full;
    v = (v | (v << 2)) & 0x3333333333333333ull;
    v = (v | (v << 1)) & 0x5555555555555555ull;
    return v;
  };
  return spread(x) | (spread(y) << 1);
}

std::uint64_t morton_code(const TokenKey& key) {
  return interleave_bits(static_cast<std::uint32_t>(key.center_x()),
                         static_cast<std::uint32_t>(key.center_y()));
}

bool canonical_less(const TokenKey& a, const TokenKey& b) {
  const auto ma = morton_code(a), mb = morton_code(b);
  if (ma != mb) return ma < mb;
  return a < b;
}

std::vector<std::uint32_t> canonical_permutation(std::span<const TokenKey> tokens) {
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(tokens.size());
  for (std::uint32_t i = 0; i < tokens.size(); ++i) keyed[i] = {morton_code(tokens[i]), i};
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    if (tokens[a.second] != tokens[b.second]) return tokens[a.second] < tokens[b.second];
    return a.second < b.second;
  });
  std::vector<std::uint32_t> perm(tokens.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) perm[i] = keyed[i].second;
  return perm;
}

std::vector<TokenKey> canonical_order(std::span<const TokenKey> tokens) {
  std::vector<TokenKey> out;
  out.reserve(tokens.size());
  for (std::uint32_t i : canonical_permutation(tokens)) out.push_back(tokens[i]);
  return out;
}

PaddedSize padded_size(int height, int width) {
  if (height <= 0 || width <= 0) throw InputError("image dimensions must be positive");
  auto up = [](int v) { return (v + kCoarseSide - 1) / kCoarseSide * kCoarseSide; };
  return {up(height), up(width)};
}

std::size_t TokenSet::total() const {
  std::size_t n = 0;
  for (const auto& l : levels_) n += l.size();
  return n;
}

void TokenSet::allocate(std::span<const std::uint32_t> selected) {
  if (frontier_ >= kFinestLevel) {
    if (!selected.empty()) throw ContractError("cannot allocate below the 4×4 scale");
    return;
  }
  const auto& front = levels_[frontier_];
  auto& next = levels_[frontier_ + 1];
  auto& next_parents = parents_[frontier_ + 1];
  std::int64_t last = -1;
  for (std::uint32_t idx : selected) {
    if (idx >= front.size())
      throw ContractError("selected index " + std::to_string(idx) + " outside the frontier");
    if (static_cast<std::int64_t>(idx) <= last)
      throw ContractError("selected indices must be strictly increasing");
    last = idx;
    for (const TokenKey& child : split(front[idx])) {
      next.push_back(child);
      next_parents.push_back(static_cast<std::int32_t>(idx));
    }
  }
  ++frontier_;
}

std::vector<TokenKey> TokenSet::all_keys() const {
  std::vector<TokenKey> out;
  out.reserve(total());
  for (const auto& l : levels_) out.insert(out.end(), l.begin(), l.end());
  return out;
}

TokenSet coarse_grid(int height, int width) {
  if (height <= 0 || width <= 0 || height % kCoarseSide != 0 || width % kCoarseSide != 0)
    throw InputError("image " + std::to_string(height) + "×" + std::to_string(width) +
                     " is not a multiple of 32 on both sides; pad it first");
  TokenSet set;
  set.height_ = height;
  set.width_ = width;
  for (int r = 0; r < height / kCoarseSide; ++r)
    for (int c = 0; c < width / kCoarseSide; ++c) {
      set.levels_[0].push_back({0, r, c});
      set.parents_[0].push_back(-1);
    }
  return set;
}

void validate(const TokenSet& set) {
  const int gr = set.grid_rows(), gc = set.grid_cols();
  auto fail = [](const std::string& what) { throw ContractError("token set invalid: " + what); };
  if (set.count(0) != static_cast<std::size_t>(gr) * gc) fail("level 0 does not tile the image");
  for (int l = 0; l < kLevels; ++l) {
    const auto keys = set.level(l);
    const auto parents = set.parents(l);
    if (parents.size() != keys.size()) fail("parent table length at level " + std::to_string(l));
    std::set<TokenKey> seen;
    const int rows = gr << l, cols = gc << l;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const TokenKey& k = keys[i];
      if (k.level != l) fail("token " + to_string(k) + " stored at level " + std::to_string(l));
      if (k.row < 0 || k.col < 0 || k.row >= rows || k.col >= cols)
        fail("token " + to_string(k) + " outside the image");
      if (!seen.insert(k).second) fail("duplicate token " + to_string(k));
      if (l == 0) continue;
      const std::int32_t p = parents[i];
      if (p < 0 || static_cast<std::size_t>(p) >= set.count(l - 1))
        fail("token " + to_string(k) + " has no parent");
      if (set.level(l - 1)[static_cast<std::size_t>(p)] != k.parent())
        fail("token " + to_string(k) + " linked to the wrong parent");
      if (k.slot() != static_cast<int>(i % 4)) fail("children of a parent are not a full quadruple");
    }
    if (keys.size() % 4 != 0 && l > 0) fail("incomplete sibling group at level " + std::to_string(l));
  }
}

std::vector<TokenRef> finest_cover_cells(const TokenSet& set) {
  const int ch = set.height() / kCellSide, cw = set.width() / kCellSide;
  std::vector<TokenRef> cover(static_cast<std::size_t>(ch) * cw);
  for (int l = 0; l < kLevels; ++l) {
    const int span = patch_side(l) / kCellSide;
    const auto keys = set.level(l);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const int r0 = keys[i].row * span, c0 = keys[i].col * span;
      for (int r = r0; r < r0 + span; ++r)
        for (int c = c0; c < c0 + span; ++c)
          cover[static_cast<std::size_t>(r) * cw + c] = {l, static_cast<std::int32_t>(i)};
    }
  }
  return cover;
}

std::vector<TokenRef> finest_cover(const TokenSet& set) {
  const auto cells = finest_cover_cells(set);
  const int w = set.width(), h = set.height(), cw = w / kCellSide;
  std::vector<TokenRef> cover(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      cover[static_cast<std::size_t>(y) * w + x] =
          cells[static_cast<std::size_t>(y / kCellSide) * cw + x / kCellSide];
  return cover;
}

}  // namespace arta::geom
