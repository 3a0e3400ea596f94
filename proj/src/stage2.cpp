#include "arta/stage2.hpp"

#include <array>
#include <istream>
#include <ostream>

#include "arta/layers.hpp"

namespace arta::stage2 {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'R', 'T', 'A', 'E', 'M', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

std::string round_prefix(int k) { return "s2.r" + std::to_string(k); }

cluster::BlockSpec block_spec(const EncoderConfig& cfg, std::string prefix, int dim, bool level_keys) {
  return {std::move(prefix), dim, cfg.heads(dim), dim * cfg.mlp_ratio, level_keys, cfg.ln_eps};
}

// Width of the emitted map of `level`.
int emitted_width(const EncoderConfig& cfg, int level) {
  if (cfg.ablation == Ablation::stage1_only) return cfg.stage1_dims[geom::kFinestLevel];
  return cfg.stage2_dims[static_cast<std::size_t>(geom::kFinestLevel - level)];
}

Var run_cluster_blocks(Binder& b, const EncoderConfig& cfg, const stage1::Output& s1, int top,
                       const std::string& prefix, int count, int dim, Var x, std::uint64_t& comparisons) {
  if (count == 0) return x;
  auto ca = stage1::cluster_rows(cfg, s1.sets, s1.layout, top);
  comparisons += ca.comparisons;
  const auto levels = s1.layout.levels(top);
  const auto valid = s1.layout.valid(top);
  for (int i = 0; i < count; ++i)
    x = cluster::attention_block(b, block_spec(cfg, prefix + std::to_string(i), dim, true), x,
                                 ca.neighborhoods, levels, valid);
  return x;
}

}  // namespace

void init_parameters(ParameterSet& ps, const EncoderConfig& cfg, Rng& rng) {
  const auto& d = cfg.stage2_dims;
  if (cfg.ablation == Ablation::stage1_only) {
    cluster::init_block(ps, block_spec(cfg, "s2.final.blk0", d[0], true), rng);
  } else {
    for (int i = 0; i < cfg.stage2_blocks[0]; ++i)
      cluster::init_block(ps, block_spec(cfg, "s2.r1.blk" + std::to_string(i), d[0], true), rng);
    for (int k = 2; k <= 4; ++k) {
      const std::string p = round_prefix(k);
      const int dim = d[static_cast<std::size_t>(k - 1)];
      layers::init_linear(ps, p + ".proj", d[static_cast<std::size_t>(k - 2)], dim, rng);
      layers::init_linear(ps, p + ".fuse", 2 * dim, dim, rng);
      const bool vit = k == 4;
      for (int i = 0; i < cfg.stage2_blocks[static_cast<std::size_t>(k - 1)]; ++i)
        cluster::init_block(ps, block_spec(cfg, p + (vit ? ".vit" : ".blk") + std::to_string(i), dim, !vit), rng);
    }
  }
  for (int l = 0; l < geom::kFinestLevel; ++l)
    layers::init_linear(ps, "dense.align" + std::to_string(l), emitted_width(cfg, l), d[0], rng);
  const int cells = (cfg.grid_rows() * geom::kCoarseSide / geom::kCellSide) *
                    (cfg.grid_cols() * geom::kCoarseSide / geom::kCellSide);
  layers::init_embedding(ps, "dense.pos", cells, d[0], rng);
}

Var lateral_fuse(Binder& b, const std::string& prefix, Var current,
                 std::span<const geom::TokenKey> current_keys, Var lateral,
                 std::span<const geom::TokenKey> lateral_keys) {
  Tape& t = b.tape();
  if (current_keys.size() != lateral_keys.size())
    throw ContractError("lateral_fuse: " + std::to_string(current_keys.size()) + " current tokens vs " +
                        std::to_string(lateral_keys.size()) + " lateral tokens");
  for (std::size_t i = 0; i < current_keys.size(); ++i)
    if (current_keys[i] != lateral_keys[i])
      throw ContractError("lateral_fuse: row " + std::to_string(i) + " pairs " +
                          geom::to_string(current_keys[i]) + " with " + geom::to_string(lateral_keys[i]));
  if (t.value(current).rows() != current_keys.size() || t.value(lateral).rows() != lateral_keys.size())
    throw DimensionError("lateral_fuse: key count differs from row count");
  return layers::linear(b, prefix, ops::concat_cols(t, current, lateral));
}

Output run_stage2(Binder& b, const EncoderConfig& cfg, const stage1::Output& s1, const stage1::Options&) {
  Tape& t = b.tape();
  const auto& lay = s1.layout;
  const auto& d = cfg.stage2_dims;
  const std::size_t batch = static_cast<std::size_t>(lay.batch);
  Output out;
  Var x = s1.tokens;

  auto emit = [&](int level) {
    out.emitted[static_cast<std::size_t>(level)] =
        ops::slice_rows(t, x, lay.offset(level), batch * lay.capacity[static_cast<std::size_t>(level)]);
  };

  if (cfg.ablation == Ablation::stage1_only) {
    {
      counting::Region region("s2.final");
      x = run_cluster_blocks(b, cfg, s1, geom::kFinestLevel, "s2.final.blk", 1, d[0], x, out.comparisons);
    }
    for (int l = 0; l < geom::kLevels; ++l) emit(l);
  } else {
    {
      counting::Region region("s2.r1.attn");
      x = run_cluster_blocks(b, cfg, s1, geom::kFinestLevel, "s2.r1.blk", cfg.stage2_blocks[0], d[0], x,
                             out.comparisons);
    }
    emit(geom::kFinestLevel);
    for (int k = 2; k <= 4; ++k) {
      const int top = 4 - k;
      const std::string p = round_prefix(k);
      const int dim = d[static_cast<std::size_t>(k - 1)];
      x = ops::slice_rows(t, x, 0, lay.rows(top));
      {
        counting::Region region(p + ".proj");
        x = layers::linear(b, p + ".proj", x);
      }
      {
        counting::Region region(p + ".fuse");
        const auto keys = stage1::row_keys(s1.sets, lay, top);
        Var lateral = s1.laterals[static_cast<std::size_t>(top)];
        const auto lateral_keys = stage1::row_keys(s1.sets, lay, top);
        x = lateral_fuse(b, p + ".fuse", x, keys, lateral, lateral_keys);
      }
      counting::Region region(p + ".attn");
      if (k == 4) {
        const Neighborhoods nb = stage1::global_rows(lay, 0);
        for (int i = 0; i < cfg.stage2_blocks[3]; ++i)
          x = cluster::attention_block(b, block_spec(cfg, p + ".vit" + std::to_string(i), dim, false), x, nb, {});
      } else {
        x = run_cluster_blocks(b, cfg, s1, top, p + ".blk", cfg.stage2_blocks[static_cast<std::size_t>(k - 1)],
                               dim, x, out.comparisons);
      }
      emit(top);
    }
  }
  out.dense = densify_finest(b, cfg, s1.sets, lay, out.emitted);
  return out;
}

Var densify_finest(Binder& b, const EncoderConfig& cfg, std::span<const geom::TokenSet> sets,
                   const stage1::LevelLayout& layout, const std::array<Var, geom::kLevels>& emitted) {
  counting::Region region("s2.densify");
  Tape& t = b.tape();
  std::array<Var, geom::kLevels> aligned;
  for (int l = 0; l < geom::kLevels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    aligned[li] = l == geom::kFinestLevel ? emitted[li]
                                          : layers::linear(b, "dense.align" + std::to_string(l), emitted[li]);
  }
  Var all = ops::concat_rows(t, aligned);

  std::vector<std::int64_t> rows, cells;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto cover = geom::finest_cover_cells(sets[s]);
    for (std::size_t c = 0; c < cover.size(); ++c) {
      const geom::TokenRef ref = cover[c];
      if (!ref.valid()) throw ContractError("densify_finest: uncovered cell " + std::to_string(c));
      rows.push_back(static_cast<std::int64_t>(layout.row(ref.level, static_cast<int>(s), static_cast<std::size_t>(ref.index))));
      cells.push_back(static_cast<std::int64_t>(c));
    }
  }
  (void)cfg;
  Var grid = ops::gather_rows(t, all, std::move(rows));
  return ops::add(t, grid, ops::gather_rows(t, b("dense.pos"), std::move(cells)));
}

EmittedMaps extract(const Tape& t, const Output& out, std::span<const geom::TokenSet> sets,
                    const stage1::LevelLayout& layout, int sample) {
  EmittedMaps m;
  const auto& set = sets[static_cast<std::size_t>(sample)];
  for (int l = 0; l < geom::kLevels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const auto keys = set.level(l);
    m.keys[li].assign(keys.begin(), keys.end());
    const Tensor& v = t.value(out.emitted[li]);
    m.features[li] = ops::slice_rows(v, static_cast<std::size_t>(sample) * layout.capacity[li], keys.size());
  }
  return m;
}

void write_emitted(std::ostream& os, const EmittedMaps& maps) {
  os.write(kMagic.data(), kMagic.size());
  binio::put_u32(os, kVersion);
  binio::put_u32(os, geom::kLevels);
  for (int l = 0; l < geom::kLevels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const Tensor& f = maps.features[li];
    if (f.rows() != maps.keys[li].size()) throw ContractError("write_emitted: key and feature counts differ");
    binio::put_u32(os, static_cast<std::uint32_t>(l));
    binio::put_u64(os, maps.keys[li].size());
    binio::put_u64(os, f.cols());
    for (const auto& k : maps.keys[li]) {
      binio::put_u32(os, static_cast<std::uint32_t>(k.row));
      binio::put_u32(os, static_cast<std::uint32_t>(k.col));
    }
    for (double v : f.data()) binio::put_f64(os, v);
  }
}

EmittedMaps read_emitted(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw InputError("not an emitted-features container (bad magic)");
  if (binio::get_u32(is) != kVersion) throw InputError("unsupported emitted-features version");
  if (binio::get_u32(is) != geom::kLevels) throw InputError("emitted-features container must hold 4 scales");
  EmittedMaps m;
  for (int l = 0; l < geom::kLevels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    if (binio::get_u32(is) != static_cast<std::uint32_t>(l)) throw InputError("emitted scales out of order");
    const std::uint64_t count = binio::get_u64(is), width = binio::get_u64(is);
    if (count > (1u << 24) || width > (1u << 16)) throw InputError("emitted map is implausibly large");
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto row = static_cast<int>(binio::get_u32(is));
      const auto col = static_cast<int>(binio::get_u32(is));
      m.keys[li].push_back({l, row, col});
    }
    std::vector<double> data(count * width);
    for (double& v : data) v = binio::get_f64(is);
    m.features[li] = Tensor({count, width}, std::move(data));
  }
  return m;
}

}  // namespace arta::stage2
