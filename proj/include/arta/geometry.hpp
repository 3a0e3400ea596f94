#pragma once

// Quadtree bookkeeping for mixed-resolution tokens.
//
// Level 0 tokens cover 32×32 pixel patches; each deeper level halves the
// side, down to 4×4 at level 3. A token at level ℓ ≥ 1 is one of the four
// 2×2 children of a level ℓ−1 token, and children are only ever created as
// complete quadruples.

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arta/errors.hpp"

namespace arta::geom {

inline constexpr int kLevels = 4;
inline constexpr int kFinestLevel = kLevels - 1;
inline constexpr int kCoarseSide = 32;
inline constexpr int kCellSide = kCoarseSide >> kFinestLevel;  // 4

struct ScaleLevel {
  int level = 0;
  constexpr int patch_side() const { return kCoarseSide >> level; }
};

constexpr int patch_side(int level) { return kCoarseSide >> level; }

// Half-open pixel rectangle [x0, x1) × [y0, y1).
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int area() const { return (x1 - x0) * (y1 - y0); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const Rect&) const = default;
};

struct TokenKey {
  int level = 0;
  int row = 0;
  int col = 0;

  int side() const { return patch_side(level); }
  Rect rect() const {
    const int s = side();
    return {col * s, row * s, col * s + s, row * s + s};
  }
  int center_x() const { return col * side() + side() / 2; }
  int center_y() const { return row * side() + side() / 2; }
  TokenKey parent() const;
  // Position within the parent's 2×2 block: 0 TL, 1 TR, 2 BL, 3 BR.
  int slot() const { return (row & 1) * 2 + (col & 1); }

  auto operator<=>(const TokenKey&) const = default;
};

std::string to_string(const TokenKey& key);

// Children in slot order.
std::array<TokenKey, 4> split(const TokenKey& parent);

// Z-order code of the patch centre (x in even bits, y in odd bits).
std::uint64_t morton_code(const TokenKey& key);
std::uint64_t interleave_bits(std::uint32_t x, std::uint32_t y);

// Strict total order: Morton code of the centre, then (level, row, col).
bool canonical_less(const TokenKey& a, const TokenKey& b);
std::vector<TokenKey> canonical_order(std::span<const TokenKey> tokens);
// Indices into `tokens` listed in canonical order.
std::vector<std::uint32_t> canonical_permutation(std::span<const TokenKey> tokens);

struct PaddedSize {
  int height = 0;
  int width = 0;
};
// Dimensions rounded up to the next multiple of 32.
PaddedSize padded_size(int height, int width);

// Index of a token inside a TokenSet.
struct TokenRef {
  int level = -1;
  std::int32_t index = -1;
  bool valid() const { return level >= 0; }
  bool operator==(const TokenRef&) const = default;
};

// All live tokens of one sample, grouped by level. Within a level, tokens are
// stored in creation order: children of the k-th selected parent occupy
// indices 4k..4k+3 in slot order.
class TokenSet {
 public:
  TokenSet() = default;

  int height() const { return height_; }
  int width() const { return width_; }
  int grid_rows() const { return height_ / kCoarseSide; }
  int grid_cols() const { return width_ / kCoarseSide; }

  std::span<const TokenKey> level(int l) const { return levels_.at(l); }
  std::span<const std::int32_t> parents(int l) const { return parents_.at(l); }
  std::size_t count(int l) const { return levels_.at(l).size(); }
  std::size_t total() const;

  // Finest level produced by the most recent allocation round.
  int frontier_level() const { return frontier_; }
  std::span<const TokenKey> frontier() const { return levels_[frontier_]; }

  // Appends the four children of each selected frontier token (indices into
  // frontier()) at frontier_level()+1 and advances the frontier, even when
  // the selection is empty. Selected indices must be strictly increasing.
  void allocate(std::span<const std::uint32_t> selected);

  // All tokens of every level, levels ascending.
  std::vector<TokenKey> all_keys() const;

  friend TokenSet coarse_grid(int height, int width);

 private:
  int height_ = 0, width_ = 0;
  int frontier_ = 0;
  std::array<std::vector<TokenKey>, kLevels> levels_;
  std::array<std::vector<std::int32_t>, kLevels> parents_;
};

// Level-0 grid over an image whose sides are multiples of 32 (pad first with
// padded_size() otherwise). Throws InputError for other sizes.
TokenSet coarse_grid(int height, int width);

// Throws ContractError describing the first violated tiling invariant.
void validate(const TokenSet& set);

// Finest token covering each 4×4 cell, row-major over (height/4)×(width/4).
std::vector<TokenRef> finest_cover_cells(const TokenSet& set);
// Finest token covering each pixel, row-major over height×width.
std::vector<TokenRef> finest_cover(const TokenSet& set);

}  // namespace arta::geom
