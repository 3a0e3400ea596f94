#include "arta/flops.hpp"

#include <cmath>

namespace arta::flops {

namespace {

using u64 = std::uint64_t;

struct Builder {
  std::vector<std::pair<std::string, OpTally>> regions;
  void add(const std::string& name, u64 macs, u64 special) {
    if (macs == 0 && special == 0) return;
    for (auto& [n, t] : regions)
      if (n == name) {
        t += OpTally{macs, special};
        return;
      }
    regions.emplace_back(name, OpTally{macs, special});
  }
  // Pre-norm block over `rows` tokens whose neighbourhood sizes sum to `volume`.
  void block(const std::string& name, u64 d, u64 heads, u64 hidden, u64 rows, u64 volume) {
    const u64 macs = 4 * rows * d * d + 2 * volume * d + 2 * rows * d * hidden;
    const u64 special = 4 * rows + heads * (volume + rows) + rows * hidden;
    add(name, macs, special);
  }
};

FlopsReport finish(std::vector<std::pair<std::string, OpTally>> regions) {
  FlopsReport r;
  r.regions = std::move(regions);
  for (const auto& [name, t] : r.regions) {
    if (name.rfind("s1.", 0) == 0) r.stage1 += t;
    else if (name.rfind("s2.", 0) == 0) r.stage2 += t;
    else r.head += t;
    r.total += t;
  }
  return r;
}

}  // namespace

OpTally FlopsReport::region(const std::string& name) const {
  for (const auto& [n, t] : regions)
    if (n == name) return t;
  return {};
}

u64 neighborhood_volume(u64 n, u64 cluster_size) {
  if (cluster_size == 0) throw ContractError("neighborhood_volume: cluster_size must be positive");
  const u64 full = n / cluster_size, rest = n % cluster_size;
  const u64 m = full + (rest ? 1 : 0);
  auto size = [&](u64 j) { return j < full ? cluster_size : rest; };
  u64 v = 0;
  for (u64 j = 0; j < m; ++j) {
    u64 nb = size(j);
    if (j > 0) nb += size(j - 1);
    if (j + 1 < m) nb += size(j + 1);
    v += size(j) * nb;
  }
  return v;
}

FlopsReport count_forward(const EncoderConfig& cfg, const stage1::AllocationTrace& trace,
                          const std::array<std::size_t, 4>& counts) {
  const u64 grid = static_cast<u64>(cfg.grid_rows()) * static_cast<u64>(cfg.grid_cols());
  if (counts[0] != grid) throw ContractError("count_forward: level-0 count disagrees with the config grid");
  for (int r = 1; r <= 3; ++r) {
    const auto& rt = trace.rounds[static_cast<std::size_t>(r - 1)];
    if (rt.k != rt.selected.size() || counts[static_cast<std::size_t>(r)] != 4 * rt.k ||
        rt.candidates != counts[static_cast<std::size_t>(r - 1)])
      throw ContractError("count_forward: trace round " + std::to_string(r) + " disagrees with token counts");
  }

  const auto& d1 = cfg.stage1_dims;
  const auto& d2 = cfg.stage2_dims;
  const u64 cs = static_cast<u64>(cfg.cluster_size);
  const u64 ratio = static_cast<u64>(cfg.mlp_ratio);
  std::array<u64, 4> n{};
  for (int l = 0; l < 4; ++l) n[static_cast<std::size_t>(l)] = counts[static_cast<std::size_t>(l)];
  auto upto = [&](int top) {
    u64 s = 0;
    for (int l = 0; l <= top; ++l) s += n[static_cast<std::size_t>(l)];
    return s;
  };
  auto heads = [&](int d) { return static_cast<u64>(cfg.heads(d)); };
  auto D = [](int d) { return static_cast<u64>(d); };

  Builder b;
  b.add("s1.embed", grid * 32 * 32 * 3 * D(d1[0]), 0);
  for (int i = 0; i < cfg.stage1_blocks[0]; ++i)
    b.block("s1.vit", D(d1[0]), heads(d1[0]), D(d1[0]) * ratio, grid, grid * grid);

  for (int r = 1; r <= 3; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const std::string p = "s1.r" + std::to_string(r);
    const u64 din = D(d1[ri - 1]), d = D(d1[ri]);
    b.add(p + ".proj", upto(r - 1) * din * d, 0);
    const u64 front = n[ri - 1], h = static_cast<u64>(cfg.scorer_width(r));
    b.add(p + ".score", front * d * h + front * h, front * h + 2 * front);
    const u64 kids = n[ri];
    if (cfg.ablation != Ablation::no_aux_image) {
      const u64 side = static_cast<u64>(geom::patch_side(r));
      b.add(p + ".alloc", kids * side * side * 3 * d + 2 * kids * d * d, kids * d);
    }
    const u64 rows = upto(r);
    for (int i = 0; i < cfg.stage1_blocks[ri]; ++i)
      b.block(p + ".attn", d, heads(d1[ri]), d * ratio, rows, neighborhood_volume(rows, cs));
  }

  if (cfg.ablation == Ablation::stage1_only) {
    const u64 rows = upto(3), d = D(d2[0]);
    b.block("s2.final", d, heads(d2[0]), d * ratio, rows, neighborhood_volume(rows, cs));
  } else {
    {
      const u64 rows = upto(3), d = D(d2[0]);
      for (int i = 0; i < cfg.stage2_blocks[0]; ++i)
        b.block("s2.r1.attn", d, heads(d2[0]), d * ratio, rows, neighborhood_volume(rows, cs));
    }
    for (int k = 2; k <= 4; ++k) {
      const auto ki = static_cast<std::size_t>(k);
      const std::string p = "s2.r" + std::to_string(k);
      const int top = 4 - k;
      const u64 rows = upto(top), din = D(d2[ki - 2]), d = D(d2[ki - 1]);
      b.add(p + ".proj", rows * din * d, 0);
      b.add(p + ".fuse", rows * 2 * d * d, 0);
      const u64 volume = k == 4 ? rows * rows : neighborhood_volume(rows, cs);
      for (int i = 0; i < cfg.stage2_blocks[ki - 1]; ++i)
        b.block(p + ".attn", d, heads(d2[ki - 1]), d * ratio, rows, volume);
    }
  }

  for (int l = 0; l < 3; ++l) {
    const u64 w = cfg.ablation == Ablation::stage1_only ? D(d1[3]) : D(d2[static_cast<std::size_t>(3 - l)]);
    b.add("s2.densify", n[static_cast<std::size_t>(l)] * w * D(d2[0]), 0);
  }
  if (cfg.sanity_head) {
    const u64 cells = grid * 8 * 8;
    b.add("head", cells * D(d2[0]) * static_cast<u64>(cfg.num_classes), 0);
  }
  return finish(std::move(b.regions));
}

FlopsReport from_counter(const OpCounter& counter) {
  std::vector<std::pair<std::string, OpTally>> regions;
  for (const auto& [name, t] : counter.regions())
    if (t.macs || t.special) regions.emplace_back(name, t);
  return finish(std::move(regions));
}

Stats corpus_stats(std::span<const double> totals) {
  if (totals.empty()) throw InputError("corpus_stats: empty corpus");
  double mean = 0;
  for (double v : totals) mean += v;
  mean /= static_cast<double>(totals.size());
  double var = 0;
  for (double v : totals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(totals.size());
  return {mean, std::sqrt(var)};
}

Stats corpus_stats(std::span<const FlopsReport> reports) {
  std::vector<double> totals;
  for (const auto& r : reports) totals.push_back(static_cast<double>(r.total.flops()));
  return corpus_stats(totals);
}

}  // namespace arta::flops
