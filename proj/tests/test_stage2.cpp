#include <gtest/gtest.h>

#include <regex>
#include <set>
#include <sstream>

#include "arta/model.hpp"
#include "arta/scene.hpp"
#include "arta/stage2.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace arta;
using geom::TokenKey;

struct Pass {
  Tape tape;
  stage1::Output s1;
  stage2::Output s2;
};

EncoderConfig nano(PolicyKind kind) {
  auto cfg = EncoderConfig::preset("nano");
  cfg.policy.kind = kind;
  cfg.policy.ratios = {0.5, 0.5, 0.5};
  return cfg;
}

void run(Pass& r, const EncoderConfig& cfg, const ParameterSet& ps, const std::vector<Image>& imgs) {
  Binder b(r.tape, ps, false);
  stage1::Input in;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    in.images.push_back(&imgs[i]);
    in.sample_ids.push_back(i);
  }
  r.s1 = stage1::run_stage1(b, cfg, in);
  r.s2 = stage2::run_stage2(b, cfg, r.s1);
}

std::vector<Image> scenes(std::uint64_t seed, std::size_t n) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_scene(seed + i, SceneSpec{64, 64, 1, 3}).image);
  return out;
}

TEST(LateralFuse, IdentityOnCurrentHalf) {
  ParameterSet ps;
  Tensor w = Tensor::matrix(8, 4);
  for (std::size_t i = 0; i < 4; ++i) w.at(i, i) = 1;
  ps.set("fuse.w", w);
  ps.set("fuse.b", Tensor({4}, 0.0));
  Rng rng(1);
  const Tensor cur = oracle::random_matrix(rng, 3, 4);
  const std::vector<TokenKey> keys{{0, 0, 0}, {1, 0, 1}, {2, 3, 3}};
  Tape t;
  Binder b(t, ps, false);
  const Var out = stage2::lateral_fuse(b, "fuse", t.constant(cur), keys, t.constant(Tensor::matrix(3, 4)), keys);
  EXPECT_EQ(t.value(out), cur);
}

TEST(LateralFuse, MatchesConcatMatmul) {
  ParameterSet ps;
  Rng rng(2);
  ps.set("fuse.w", oracle::random_matrix(rng, 12, 6));
  ps.set("fuse.b", oracle::random_matrix(rng, 1, 6));
  const Tensor cur = oracle::random_matrix(rng, 5, 6), lat = oracle::random_matrix(rng, 5, 6);
  const std::vector<TokenKey> keys(5, TokenKey{0, 0, 0});
  Tape t;
  Binder b(t, ps, false);
  const Tensor got = t.value(stage2::lateral_fuse(b, "fuse", t.constant(cur), keys, t.constant(lat), keys));
  Tensor cat = Tensor::matrix(5, 12);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 6; ++c) {
      cat.at(i, c) = cur.at(i, c);
      cat.at(i, 6 + c) = lat.at(i, c);
    }
  const Tensor want = oracle::linear(cat, ps.get("fuse.w"), Tensor({6}, std::vector<double>(ps.get("fuse.b").data().begin(), ps.get("fuse.b").data().end())));
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(LateralFuse, KeyMismatchIsContractError) {
  ParameterSet ps;
  ps.set("fuse.w", Tensor::matrix(4, 2));
  ps.set("fuse.b", Tensor({2}, 0.0));
  Tape t;
  Binder b(t, ps, false);
  const Var x = t.constant(Tensor::matrix(2, 2));
  const std::vector<TokenKey> a{{0, 0, 0}, {1, 0, 0}}, c{{0, 0, 0}, {1, 0, 1}}, one{{0, 0, 0}};
  EXPECT_THROW(stage2::lateral_fuse(b, "fuse", x, a, x, c), ContractError);
  EXPECT_THROW(stage2::lateral_fuse(b, "fuse", x, a, x, one), ContractError);
}

TEST(Stage2Parameters, TinyWidthsAndBlockCounts) {
  auto cfg = EncoderConfig::preset("tiny");
  ParameterSet ps;
  Rng rng(3);
  stage2::init_parameters(ps, cfg, rng);
  const std::array<std::size_t, 4> dims{64, 128, 256, 512};
  for (int k = 2; k <= 4; ++k) {
    const auto& w = ps.get("s2.r" + std::to_string(k) + ".fuse.w");
    EXPECT_EQ(w.shape(), (std::vector<std::size_t>{2 * dims[static_cast<std::size_t>(k - 1)], dims[static_cast<std::size_t>(k - 1)]}));
  }
  std::array<std::set<std::string>, 4> blocks;
  const std::regex name(R"(s2\.r(\d)\.(blk|vit)(\d+)\..*)");
  for (const auto& [n, _] : ps) {
    std::smatch m;
    if (std::regex_match(n, m, name)) blocks[static_cast<std::size_t>(std::stoi(m[1]) - 1)].insert(m[3]);
  }
  EXPECT_EQ(blocks[0].size(), 4u);
  EXPECT_EQ(blocks[1].size(), 4u);
  EXPECT_EQ(blocks[2].size(), 16u);
  EXPECT_EQ(blocks[3].size(), 4u);
}

TEST(RunStage2, CoarseOnlyInput) {
  auto cfg = nano(PolicyKind::adaptive);
  auto ps = init_parameters(cfg, 4);
  for (int r = 1; r <= 3; ++r) ps.get_mut("s1.r" + std::to_string(r) + ".score.fc2.b")[0] = -1e3;
  Pass r;
  run(r, cfg, ps, scenes(10, 2));
  for (int l = 1; l < 4; ++l) EXPECT_EQ(r.tape.value(r.s2.emitted[static_cast<std::size_t>(l)]).size(), 0u);
  EXPECT_EQ(r.tape.value(r.s2.emitted[0]).rows(), 8u);
  EXPECT_EQ(r.tape.value(r.s2.emitted[0]).cols(), 64u);
  // Every 8×8 block of cells repeats its coarse token.
  const Tensor& dense = r.tape.value(r.s2.dense);
  const Tensor& pos = ps.get("dense.pos");
  ASSERT_EQ(dense.rows(), 2u * 256);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t c = 0; c < 256; ++c) {
      const std::size_t cy = c / 16, cx = c % 16, coarse = (cy / 8) * 2 + cx / 8;
      const std::size_t anchor = (cy / 8) * 8 * 16 + (cx / 8) * 8;
      for (std::size_t j = 0; j < 8; ++j)
        ASSERT_NEAR(dense.at(s * 256 + c, j) - pos.at(c, j), dense.at(s * 256 + anchor, j) - pos.at(anchor, j), 1e-12)
            << "coarse token " << coarse;
    }
}

TEST(RunStage2, TokenConservation) {
  for (auto kind : {PolicyKind::adaptive, PolicyKind::dense, PolicyKind::random_ratio}) {
    const auto cfg = nano(kind);
    const auto ps = init_parameters(cfg, 5);
    Pass r;
    run(r, cfg, ps, scenes(20, 3));
    for (int s = 0; s < 3; ++s) {
      const auto maps = stage2::extract(r.tape, r.s2, r.s1.sets, r.s1.layout, s);
      for (int l = 0; l < 4; ++l) {
        const auto li = static_cast<std::size_t>(l);
        const auto keys = r.s1.sets[static_cast<std::size_t>(s)].level(l);
        EXPECT_EQ(maps.keys[li], std::vector<TokenKey>(keys.begin(), keys.end()));
        EXPECT_EQ(maps.features[li].rows(), keys.size());
        if (!keys.empty()) EXPECT_EQ(maps.features[li].cols(), static_cast<std::size_t>(cfg.stage2_dims[3 - li]));
      }
    }
  }
}

TEST(RunStage2, LaterRoundsLeaveEmissionsAlone) {
  const auto cfg = nano(PolicyKind::random_ratio);
  const auto ps = init_parameters(cfg, 6);
  auto moved = ps;
  for (auto& [name, v] : moved)
    if (name.rfind("s2.r3.", 0) == 0 || name.rfind("s2.r4.", 0) == 0)
      for (double& e : v.data()) e += 0.5;
  const auto imgs = scenes(30, 2);
  Pass a, b;
  run(a, cfg, ps, imgs);
  run(b, cfg, moved, imgs);
  for (int l : {3, 2}) EXPECT_EQ(a.tape.value(a.s2.emitted[static_cast<std::size_t>(l)]), b.tape.value(b.s2.emitted[static_cast<std::size_t>(l)]));
  EXPECT_NE(a.tape.value(a.s2.emitted[0]), b.tape.value(b.s2.emitted[0]));
}

TEST(Densify, DensePolicyUsesFinestMap) {
  const auto cfg = nano(PolicyKind::dense);
  const auto ps = init_parameters(cfg, 7);
  Pass r;
  run(r, cfg, ps, scenes(40, 1));
  const Tensor& fine = r.tape.value(r.s2.emitted[3]);
  const Tensor& dense = r.tape.value(r.s2.dense);
  const auto keys = r.s1.sets[0].level(3);
  ASSERT_EQ(keys.size(), 256u);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::size_t cell = static_cast<std::size_t>(keys[i].row) * 16 + static_cast<std::size_t>(keys[i].col);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(dense.at(cell, j), fine.at(i, j) + ps.get("dense.pos").at(cell, j));
  }
}

TEST(Densify, MixedCoverMatchesDeepestScan) {
  const auto cfg = nano(PolicyKind::random_ratio);
  const auto ps = init_parameters(cfg, 8);
  Pass r;
  run(r, cfg, ps, scenes(50, 3));
  const Tensor& dense = r.tape.value(r.s2.dense);
  for (int s = 0; s < 3; ++s) {
    const auto& set = r.s1.sets[static_cast<std::size_t>(s)];
    const auto maps = stage2::extract(r.tape, r.s2, r.s1.sets, r.s1.layout, s);
    const auto deepest = oracle::deepest_cover(set.all_keys(), 64, 64);
    for (std::size_t c = 0; c < 256; ++c) {
      const TokenKey k = deepest[(c / 16) * 4 * 64 + (c % 16) * 4];
      const auto li = static_cast<std::size_t>(k.level);
      const auto& ks = maps.keys[li];
      const auto idx = static_cast<std::size_t>(std::find(ks.begin(), ks.end(), k) - ks.begin());
      Tensor feat = ops::slice_rows(maps.features[li], idx, 1);
      if (k.level != 3) {
        const std::string a = "dense.align" + std::to_string(k.level);
        feat = oracle::linear(feat, ps.get(a + ".w"), ps.get(a + ".b"));
      }
      for (std::size_t j = 0; j < 8; ++j)
        ASSERT_NEAR(dense.at(static_cast<std::size_t>(s) * 256 + c, j), feat[j] + ps.get("dense.pos").at(c, j), 1e-12);
    }
  }
}

TEST(EmittedMaps, RoundTrip) {
  const auto cfg = nano(PolicyKind::random_ratio);
  const auto ps = init_parameters(cfg, 9);
  Pass r;
  run(r, cfg, ps, scenes(60, 2));
  const auto maps = stage2::extract(r.tape, r.s2, r.s1.sets, r.s1.layout, 1);
  std::stringstream ss;
  stage2::write_emitted(ss, maps);
  EXPECT_EQ(stage2::read_emitted(ss), maps);
  std::stringstream bad("ARTAXXX\0rest");
  EXPECT_THROW(stage2::read_emitted(bad), InputError);
  std::string bytes;
  {
    std::stringstream ok;
    stage2::write_emitted(ok, maps);
    bytes = ok.str();
  }
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(stage2::read_emitted(cut), InputError);
}

}  // namespace
