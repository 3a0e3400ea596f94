#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "arta/geometry.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace arta;
using geom::TokenKey;

// Number of tokens of `tokens` covering every pixel.
std::vector<int> coverage(std::span<const TokenKey> tokens, int h, int w) {
  std::vector<int> c(static_cast<std::size_t>(h) * w, 0);
  for (const auto& t : tokens) {
    const auto r = t.rect();
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) ++c[static_cast<std::size_t>(y) * w + x];
  }
  return c;
}

TEST(ScaleLevel, SideHalvesPerLevel) {
  for (int l = 0; l < geom::kLevels; ++l) EXPECT_EQ(geom::ScaleLevel{l}.patch_side(), 32 >> l);
  EXPECT_EQ(geom::patch_side(3), 4);
}

TEST(TokenKey, ParentAndSlot) {
  const TokenKey k{2, 5, 6};
  EXPECT_EQ(k.parent(), (TokenKey{1, 2, 3}));
  EXPECT_EQ(k.slot(), 2);
  EXPECT_THROW((TokenKey{0, 1, 1}).parent(), ContractError);
}

TEST(CoarseGrid, Counts) {
  EXPECT_EQ(geom::coarse_grid(256, 256).count(0), 64u);
  EXPECT_EQ(geom::coarse_grid(64, 32).count(0), 2u);
  EXPECT_THROW(geom::coarse_grid(60, 64), InputError);
}

TEST(CoarseGrid, PartitionsTheImage) {
  const auto set = geom::coarse_grid(512, 512);
  ASSERT_EQ(set.count(0), 256u);
  for (int c : coverage(set.level(0), 512, 512)) ASSERT_EQ(c, 1);
}

TEST(Split, ForcedChildren) {
  const auto kids = geom::split({0, 0, 0});
  EXPECT_EQ(kids[0], (TokenKey{1, 0, 0}));
  EXPECT_EQ(kids[1], (TokenKey{1, 0, 1}));
  EXPECT_EQ(kids[2], (TokenKey{1, 1, 0}));
  EXPECT_EQ(kids[3], (TokenKey{1, 1, 1}));
  EXPECT_THROW(geom::split({3, 0, 0}), ContractError);
}

TEST(Split, ChildrenTileParent) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int level = static_cast<int>(rng.below(3));
    const int n = 4 << level;
    const TokenKey p{level, static_cast<int>(rng.below(static_cast<std::uint64_t>(n))),
                     static_cast<int>(rng.below(static_cast<std::uint64_t>(n)))};
    const auto kids = geom::split(p);
    const auto pr = p.rect();
    std::vector<int> cover = coverage(kids, 128, 128);
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x)
        ASSERT_EQ(cover[static_cast<std::size_t>(y) * 128 + x], pr.contains(x, y) ? 1 : 0);
    for (const auto& k : kids) {
      EXPECT_EQ(k.rect().area() * 4, pr.area());
      EXPECT_EQ(k.parent(), p);
    }
  }
}

TEST(CanonicalOrder, SingleAndPermutationInvariant) {
  const std::vector<TokenKey> one{{2, 3, 1}};
  EXPECT_EQ(geom::canonical_order(one), one);
  Rng rng(2);
  const auto set = fixtures::random_set(rng, 64, 96, 0.5);
  auto keys = set.all_keys();
  const auto ref = geom::canonical_order(keys);
  for (int i = 0; i < 10; ++i) {
    for (std::size_t j = keys.size(); j > 1; --j) std::swap(keys[j - 1], keys[rng.below(j)]);
    EXPECT_EQ(geom::canonical_order(keys), ref);
  }
}

TEST(CanonicalOrder, MatchesSortOracle) {
  Rng rng(3);
  std::vector<TokenKey> keys;
  while (keys.size() < 100) {
    const int l = static_cast<int>(rng.below(4));
    const int n = 4 << l;
    const TokenKey k{l, static_cast<int>(rng.below(static_cast<std::uint64_t>(n))),
                     static_cast<int>(rng.below(static_cast<std::uint64_t>(n)))};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  EXPECT_EQ(geom::canonical_order(keys), oracle::canonical(keys));
  const auto perm = geom::canonical_permutation(keys);
  const auto ordered = geom::canonical_order(keys);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(keys[perm[i]], ordered[i]);
}

TEST(Morton, InterleavesBits) {
  EXPECT_EQ(geom::interleave_bits(0b11, 0b00), 0b0101u);
  EXPECT_EQ(geom::interleave_bits(0b00, 0b11), 0b1010u);
  for (std::uint32_t x : {0u, 5u, 1000u, 123456u})
    for (std::uint32_t y : {0u, 7u, 99999u}) EXPECT_EQ(geom::interleave_bits(x, y), oracle::morton(x, y));
}

TEST(TokenSet, AllocateAppendsQuadruples) {
  auto set = geom::coarse_grid(64, 64);
  const std::vector<std::uint32_t> sel{1, 3};
  set.allocate(sel);
  ASSERT_EQ(set.count(1), 8u);
  EXPECT_EQ(set.frontier_level(), 1);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(set.level(1)[i].parent(), set.level(0)[sel[i / 4]]);
    EXPECT_EQ(set.parents(1)[i], static_cast<std::int32_t>(sel[i / 4]));
  }
  set.allocate({});
  EXPECT_EQ(set.frontier_level(), 2);
  EXPECT_EQ(set.count(2), 0u);
  geom::validate(set);
}

TEST(TokenSet, AllocateRejectsBadSelections) {
  auto set = geom::coarse_grid(64, 64);
  const std::vector<std::uint32_t> unsorted{2, 1}, out_of_range{4};
  EXPECT_THROW(set.allocate(unsorted), ContractError);
  EXPECT_THROW(set.allocate(out_of_range), ContractError);
}

TEST(TokenSet, InvariantsOnRandomTraces) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto set = fixtures::random_set(rng, 64, 96, rng.uniform(0.1, 0.9));
    geom::validate(set);
    for (int l = 1; l < geom::kLevels; ++l) {
      std::map<TokenKey, int> siblings;
      for (const auto& k : set.level(l)) ++siblings[k.parent()];
      for (const auto& [parent, n] : siblings) {
        EXPECT_EQ(n, 4);
        const auto above = set.level(l - 1);
        EXPECT_NE(std::find(above.begin(), above.end(), parent), above.end());
      }
      for (int c : coverage(set.level(l), 64, 96)) ASSERT_LE(c, 1);
    }
  }
}

TEST(FinestCover, CoarseOnly) {
  const auto set = geom::coarse_grid(64, 64);
  const auto cover = geom::finest_cover(set);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const auto ref = cover[static_cast<std::size_t>(y) * 64 + x];
      EXPECT_EQ(ref.level, 0);
      EXPECT_EQ(set.level(0)[static_cast<std::size_t>(ref.index)], (TokenKey{0, y / 32, x / 32}));
    }
}

TEST(FinestCover, OneSplitParent) {
  auto set = geom::coarse_grid(64, 64);
  set.allocate(std::vector<std::uint32_t>{2});
  const auto cover = geom::finest_cover(set);
  const auto parent = set.level(0)[2].rect();
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) EXPECT_EQ(cover[static_cast<std::size_t>(y) * 64 + x].level, parent.contains(x, y) ? 1 : 0);
}

TEST(FinestCover, MatchesDeepestTokenScan) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto set = fixtures::random_set(rng, 64, 64, rng.uniform(0.2, 0.8));
    const auto cover = geom::finest_cover(set);
    const auto want = oracle::deepest_cover(set.all_keys(), 64, 64);
    for (std::size_t p = 0; p < cover.size(); ++p)
      ASSERT_EQ(set.level(cover[p].level)[static_cast<std::size_t>(cover[p].index)], want[p]);
    const auto cells = geom::finest_cover_cells(set);
    ASSERT_EQ(cells.size(), 16u * 16u);
    for (int cy = 0; cy < 16; ++cy)
      for (int cx = 0; cx < 16; ++cx)
        EXPECT_EQ(cells[static_cast<std::size_t>(cy) * 16 + cx], cover[static_cast<std::size_t>(cy * 4) * 64 + cx * 4]);
  }
}

TEST(PaddedSize, RoundsUp) {
  EXPECT_EQ(geom::padded_size(33, 64).height, 64);
  EXPECT_EQ(geom::padded_size(33, 64).width, 64);
  EXPECT_EQ(geom::padded_size(1, 95).width, 96);
  EXPECT_THROW(geom::padded_size(0, 3), InputError);
}

}  // namespace
