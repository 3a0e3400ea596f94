#include "arta/stage1.hpp"

#include <algorithm>
#include <cmath>

#include "arta/layers.hpp"

namespace arta::stage1 {

namespace {

std::string round_prefix(int r) { return "s1.r" + std::to_string(r); }

cluster::BlockSpec block_spec(const EncoderConfig& cfg, std::string prefix, int dim, bool level_keys) {
  return {std::move(prefix), dim, cfg.heads(dim), dim * cfg.mlp_ratio, level_keys, cfg.ln_eps};
}

int patch_inputs(int level) {
  const int s = geom::patch_side(level);
  return s * s * 3;
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout

std::size_t LevelLayout::offset(int level) const {
  std::size_t off = 0;
  for (int l = 0; l < level; ++l) off += static_cast<std::size_t>(batch) * capacity[l];
  return off;
}

std::vector<std::uint8_t> LevelLayout::valid(int top) const {
  std::vector<std::uint8_t> out;
  for (int l = 0; l <= top; ++l) out.insert(out.end(), masks[l].begin(), masks[l].end());
  return out;
}

std::vector<std::int32_t> LevelLayout::sample_of(int top) const {
  std::vector<std::int32_t> out;
  for (int l = 0; l <= top; ++l)
    for (int s = 0; s < batch; ++s) out.insert(out.end(), capacity[l], s);
  return out;
}

std::vector<int> LevelLayout::levels(int top) const {
  std::vector<int> out;
  for (int l = 0; l <= top; ++l) out.insert(out.end(), static_cast<std::size_t>(batch) * capacity[l], l);
  return out;
}

LevelLayout pad_and_mask(std::span<const geom::TokenSet> sets) {
  LevelLayout lay;
  lay.batch = static_cast<int>(sets.size());
  for (int l = 0; l < geom::kLevels; ++l) {
    for (const auto& s : sets) {
      lay.counts[l].push_back(s.count(l));
      lay.capacity[l] = std::max(lay.capacity[l], s.count(l));
    }
    for (std::size_t n : lay.counts[l])
      for (std::size_t i = 0; i < lay.capacity[l]; ++i) lay.masks[l].push_back(i < n ? 1 : 0);
  }
  return lay;
}

std::vector<geom::TokenKey> row_keys(std::span<const geom::TokenSet> sets, const LevelLayout& layout,
                                     int top) {
  std::vector<geom::TokenKey> out;
  out.reserve(layout.rows(top));
  for (int l = 0; l <= top; ++l)
    for (int s = 0; s < layout.batch; ++s) {
      const auto keys = sets[static_cast<std::size_t>(s)].level(l);
      for (std::size_t i = 0; i < layout.capacity[l]; ++i)
        out.push_back(i < keys.size() ? keys[i] : geom::TokenKey{l, -1, -1});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Selection

std::vector<std::uint32_t> select(std::span<const double> scores, double tau) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > tau) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

std::vector<std::uint32_t> random_select(std::size_t n, double ratio, std::uint64_t seed,
                                         std::uint64_t sample_id, int round) {
  const auto k = static_cast<std::uint32_t>(std::lround(ratio * static_cast<double>(n)));
  Rng rng = Rng(seed).split(sample_id).split(static_cast<std::uint64_t>(round));
  auto picked = rng.sample_without_replacement(static_cast<std::uint32_t>(n), std::min<std::uint32_t>(k, n));
  std::sort(picked.begin(), picked.end());
  return picked;
}

bool oracle_mix_gate(double rate, std::uint64_t seed, std::uint64_t batch_index) {
  if (rate <= 0) return false;
  if (rate >= 1) return true;
  return Rng(seed ^ 0x6f7261636c65ull).split(batch_index).bernoulli(rate);
}

// ---------------------------------------------------------------------------
// Parameters

constexpr double kScorePrior = 0.05;

void init_parameters(ParameterSet& ps, const EncoderConfig& cfg, Rng& rng) {
  const auto& d = cfg.stage1_dims;
  const int grid = cfg.grid_rows() * cfg.grid_cols();
  layers::init_linear(ps, "s1.embed", patch_inputs(0), d[0], rng);
  layers::init_embedding(ps, "s1.embed.pos", grid, d[0], rng);
  for (int i = 0; i < cfg.stage1_blocks[0]; ++i)
    cluster::init_block(ps, block_spec(cfg, "s1.vit" + std::to_string(i), d[0], false), rng);
  for (int r = 1; r <= cfg.rounds; ++r) {
    const std::string p = round_prefix(r);
    layers::init_linear(ps, p + ".proj", d[r - 1], d[r], rng);
    layers::init_mlp(ps, p + ".score", d[r], cfg.scorer_width(r), 1, rng);
    // Start near the typical target instead of 0.5; the early pull toward 0
    // otherwise overshoots into the flat tail of the sigmoid.
    ps.get_mut(p + ".score.fc2.b")[0] = std::log(kScorePrior / (1 - kScorePrior));
    layers::init_linear(ps, p + ".pix", patch_inputs(r), d[r], rng);
    layers::init_mlp(ps, p + ".aux", d[r], d[r], d[r], rng);
    layers::init_embedding(ps, p + ".scale", 1, d[r], rng);
    layers::init_embedding(ps, p + ".slot", 4, d[r], rng);
    for (int i = 0; i < cfg.stage1_blocks[r]; ++i)
      cluster::init_block(ps, block_spec(cfg, p + ".blk" + std::to_string(i), d[r], true), rng);
  }
}

// ---------------------------------------------------------------------------
// Building blocks

void flatten_patch(const Image& img, const geom::Rect& r, std::span<double> out) {
  std::size_t at = 0;
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x)
      for (int c = 0; c < 3; ++c) out[at++] = img.at(y, x, c);
}

Var coarse_embed(Binder& b, const EncoderConfig& cfg, std::span<const Image* const> images) {
  counting::Region region("s1.embed");
  Tape& t = b.tape();
  const int gr = cfg.grid_rows(), gc = cfg.grid_cols();
  const std::size_t grid = static_cast<std::size_t>(gr) * gc;
  Tensor patches = Tensor::matrix(images.size() * grid, static_cast<std::size_t>(patch_inputs(0)));
  std::vector<std::int64_t> pos;
  for (std::size_t s = 0; s < images.size(); ++s) {
    const Image& img = *images[s];
    if (img.height != gr * geom::kCoarseSide || img.width != gc * geom::kCoarseSide)
      throw InputError("coarse_embed: image is " + std::to_string(img.height) + "×" +
                       std::to_string(img.width) + ", config expects the padded " +
                       std::to_string(gr * geom::kCoarseSide) + "×" + std::to_string(gc * geom::kCoarseSide));
    for (int r = 0; r < gr; ++r)
      for (int c = 0; c < gc; ++c) {
        const std::size_t cell = static_cast<std::size_t>(r) * gc + c;
        flatten_patch(img, geom::TokenKey{0, r, c}.rect(), patches.row(s * grid + cell));
        pos.push_back(static_cast<std::int64_t>(cell));
      }
  }
  Var x = layers::linear(b, "s1.embed", t.constant(std::move(patches)));
  return ops::add(t, x, ops::gather_rows(t, b("s1.embed.pos"), std::move(pos)));
}

Neighborhoods global_rows(const LevelLayout& layout, int level) {
  Neighborhoods nb;
  std::vector<std::uint32_t> keys;
  const std::size_t cap = layout.capacity[level];
  for (int s = 0; s < layout.batch; ++s) {
    const std::size_t n = layout.counts[level][static_cast<std::size_t>(s)];
    keys.clear();
    for (std::size_t i = 0; i < n; ++i) keys.push_back(static_cast<std::uint32_t>(s * cap + i));
    for (std::size_t i = 0; i < cap; ++i) nb.push(i < n ? std::span<const std::uint32_t>(keys) : std::span<const std::uint32_t>());
  }
  return nb;
}

Var pre_allocation_vit(Binder& b, const EncoderConfig& cfg, Var x, int batch) {
  counting::Region region("s1.vit");
  const std::size_t rows = b.tape().value(x).rows();
  if (batch <= 0 || rows % static_cast<std::size_t>(batch) != 0)
    throw DimensionError("pre_allocation_vit: rows do not split into equal samples");
  LevelLayout lay;
  lay.batch = batch;
  lay.capacity[0] = rows / static_cast<std::size_t>(batch);
  lay.counts[0].assign(static_cast<std::size_t>(batch), lay.capacity[0]);
  const Neighborhoods nb = global_rows(lay, 0);
  for (int i = 0; i < cfg.stage1_blocks[0]; ++i)
    x = cluster::attention_block(b, block_spec(cfg, "s1.vit" + std::to_string(i), cfg.stage1_dims[0], false),
                                 x, nb, {});
  return x;
}

Var score(Binder& b, const EncoderConfig& cfg, int round, Var frontier) {
  (void)cfg;
  counting::Region region(round_prefix(round) + ".score");
  return ops::sigmoid(b.tape(), layers::mlp(b, round_prefix(round) + ".score", frontier));
}

Var allocate(Binder& b, const EncoderConfig& cfg, int round, Var parents,
             std::span<const std::int64_t> parent_rows, std::span<const geom::TokenKey> keys,
             std::span<const std::int32_t> sample_of, std::span<const Image* const> images) {
  counting::Region region(round_prefix(round) + ".alloc");
  if (round < 1 || round > geom::kFinestLevel) throw ContractError("allocate: round must be 1..3");
  if (parent_rows.size() != keys.size() || sample_of.size() != keys.size())
    throw DimensionError("allocate: per-child arrays disagree in length");
  Tape& t = b.tape();
  const std::string p = round_prefix(round);
  const std::size_t n = keys.size();
  const int d = cfg.stage1_dims[round];

  std::vector<std::int64_t> slots(n, -1);
  for (std::size_t j = 0; j < n; ++j) {
    if (keys[j].row < 0) continue;
    if (keys[j].level != round) throw ContractError("allocate: child " + geom::to_string(keys[j]) +
                                                    " is not at level " + std::to_string(round));
    slots[j] = keys[j].slot();
  }

  Var x = ops::gather_rows(t, b(p + ".slot"), std::move(slots));
  x = ops::add_row(t, x, b(p + ".scale"));
  if (cfg.ablation != Ablation::no_residual)
    x = ops::add(t, x, ops::gather_rows(t, parents, {parent_rows.begin(), parent_rows.end()}));
  if (cfg.ablation != Ablation::no_aux_image) {
    Tensor pixels = Tensor::matrix(n, static_cast<std::size_t>(patch_inputs(round)));
    for (std::size_t j = 0; j < n; ++j)
      if (keys[j].row >= 0) flatten_patch(*images[static_cast<std::size_t>(sample_of[j])], keys[j].rect(), pixels.row(j));
    Var aux = layers::mlp(b, p + ".aux", layers::linear(b, p + ".pix", t.constant(std::move(pixels))));
    x = ops::add(t, x, aux);
  }
  if (t.value(x).cols() != static_cast<std::size_t>(d)) throw DimensionError("allocate: width mismatch");
  return x;
}

cluster::ClusterAssignment cluster_rows(const EncoderConfig& cfg, std::span<const geom::TokenSet> sets,
                                        const LevelLayout& layout, int top) {
  const auto keys = row_keys(sets, layout, top);
  const auto samples = layout.sample_of(top);
  const auto valid = layout.valid(top);
  return cluster::cluster(keys, cfg.cluster_size, samples, valid);
}

Var add_pad_noise(Tape& t, Var x, const LevelLayout& layout, int level, const Options& opt, std::uint64_t tag) {
  if (opt.pad_noise == 0.0) return x;
  const Tensor& v = t.value(x);
  Tensor noise(v.shape(), 0.0);
  Rng rng = Rng(opt.pad_noise_seed).split(tag);
  const std::size_t cap = layout.capacity[level];
  for (int s = 0; s < layout.batch; ++s)
    for (std::size_t i = layout.counts[level][static_cast<std::size_t>(s)]; i < cap; ++i)
      for (double& e : noise.row(static_cast<std::size_t>(s) * cap + i)) e = opt.pad_noise * rng.normal();
  return ops::add(t, x, t.constant(std::move(noise)));
}

// ---------------------------------------------------------------------------
// Driver

Output run_stage1(Binder& b, const EncoderConfig& cfg, const Input& in, const Options& opt) {
  Tape& t = b.tape();
  const std::size_t batch = in.images.size();
  if (batch == 0) throw InputError("run_stage1: empty batch");
  if (!in.labels.empty() && in.labels.size() != batch)
    throw InputError("run_stage1: label maps must accompany every image or none");
  if (in.sample_ids.size() != batch) throw InputError("run_stage1: one sample id per image is required");
  const bool oracle_training = cfg.policy.kind == PolicyKind::oracle_mix && opt.training;
  if (oracle_training && in.labels.empty())
    throw InputError("oracle_mix training needs label maps");
  const bool use_oracle =
      oracle_training && oracle_mix_gate(cfg.policy.oracle_rate, cfg.policy.seed, opt.batch_index);

  Output out;
  const int height = in.images[0]->height, width = in.images[0]->width;
  for (std::size_t s = 0; s < batch; ++s) {
    if (in.images[s]->height != height || in.images[s]->width != width)
      throw InputError("run_stage1: images in one batch must share a size");
    if (!in.labels.empty() && (in.labels[s]->height != height || in.labels[s]->width != width))
      throw InputError("run_stage1: label map size differs from its image");
    out.sets.push_back(geom::coarse_grid(height, width));
  }
  out.traces.resize(batch);
  out.layout = pad_and_mask(out.sets);

  std::vector<BoundaryMap> bmaps;
  for (const LabelMap* lm : in.labels) bmaps.push_back(boundary_map(*lm, cfg.connectivity));

  Var x = coarse_embed(b, cfg, in.images);
  x = pre_allocation_vit(b, cfg, x, static_cast<int>(batch));
  out.laterals[0] = x;

  // Scores, targets and masks per round; the allocator loss is the mean of
  // the per-round MSEs so the few coarse candidates are not drowned out by the
  // many fine ones.
  std::vector<Var> score_vars;
  std::vector<std::vector<double>> round_targets(static_cast<std::size_t>(cfg.rounds));
  std::vector<std::vector<std::uint8_t>> round_mask(static_cast<std::size_t>(cfg.rounds));

  for (int r = 1; r <= cfg.rounds; ++r) {
    const std::string p = round_prefix(r);
    LevelLayout& lay = out.layout;
    {
      counting::Region region(p + ".proj");
      x = layers::linear(b, p + ".proj", x);
    }
    const std::size_t front_off = lay.offset(r - 1), front_cap = lay.capacity[r - 1];
    Var front = ops::slice_rows(t, x, front_off, batch * front_cap);
    Var sc = score(b, cfg, r, front);
    const Tensor& sv = t.value(sc);

    for (std::size_t s = 0; s < batch; ++s) {
      RoundTrace& rt = out.traces[s].rounds[static_cast<std::size_t>(r - 1)];
      const auto frontier = out.sets[s].frontier();
      rt.round = r;
      rt.candidates = frontier.size();
      rt.scores.assign(sv.data().begin() + static_cast<std::ptrdiff_t>(s * front_cap),
                       sv.data().begin() + static_cast<std::ptrdiff_t>(s * front_cap + frontier.size()));
      if (!bmaps.empty()) rt.targets = target_scores(bmaps[s], frontier);
      const double tau = cfg.tau[static_cast<std::size_t>(r - 1)];
      switch (cfg.policy.kind) {
        case PolicyKind::dense:
          rt.selected.resize(frontier.size());
          for (std::size_t i = 0; i < frontier.size(); ++i) rt.selected[i] = static_cast<std::uint32_t>(i);
          break;
        case PolicyKind::random_ratio:
          rt.selected = random_select(frontier.size(), cfg.policy.ratios[static_cast<std::size_t>(r - 1)],
                                      cfg.policy.seed, in.sample_ids[s], r);
          break;
        case PolicyKind::adaptive:
        case PolicyKind::oracle_mix:
          rt.oracle = use_oracle;
          rt.selected = select(use_oracle ? rt.targets : rt.scores, tau);
          break;
      }
      rt.k = rt.selected.size();
      for (std::size_t i = 0; i < front_cap; ++i) {
        round_targets[static_cast<std::size_t>(r - 1)].push_back(i < rt.targets.size() ? rt.targets[i] : 0.0);
        round_mask[static_cast<std::size_t>(r - 1)].push_back(!bmaps.empty() && i < frontier.size() ? 1 : 0);
      }
    }
    score_vars.push_back(sc);

    // Children of the selected parents.
    std::vector<std::int64_t> parent_rows;
    std::vector<geom::TokenKey> child_keys;
    std::vector<std::int32_t> child_sample;
    for (std::size_t s = 0; s < batch; ++s) out.sets[s].allocate(out.traces[s].rounds[static_cast<std::size_t>(r - 1)].selected);
    lay.capacity[r] = 0;
    lay.counts[r].clear();
    lay.masks[r].clear();
    for (const auto& set : out.sets) {
      lay.counts[r].push_back(set.count(r));
      lay.capacity[r] = std::max(lay.capacity[r], set.count(r));
    }
    for (std::size_t s = 0; s < batch; ++s) {
      const auto& sel = out.traces[s].rounds[static_cast<std::size_t>(r - 1)].selected;
      const auto keys = out.sets[s].level(r);
      for (std::size_t j = 0; j < lay.capacity[r]; ++j) {
        const bool real = j < keys.size();
        lay.masks[r].push_back(real ? 1 : 0);
        parent_rows.push_back(real ? static_cast<std::int64_t>(s * front_cap + sel[j / 4]) : -1);
        child_keys.push_back(real ? keys[j] : geom::TokenKey{r, -1, -1});
        child_sample.push_back(static_cast<std::int32_t>(s));
      }
    }
    Var children = allocate(b, cfg, r, front, parent_rows, child_keys, child_sample, in.images);
    children = add_pad_noise(t, children, lay, r, opt, static_cast<std::uint64_t>(r));
    const Var parts[2] = {x, children};
    x = ops::concat_rows(t, parts);

    if (cfg.stage1_blocks[r] > 0) {
      counting::Region region(p + ".attn");
      auto ca = cluster_rows(cfg, out.sets, lay, r);
      out.comparisons += ca.comparisons;
      const auto levels = lay.levels(r);
      const auto valid = lay.valid(r);
      for (int i = 0; i < cfg.stage1_blocks[r]; ++i)
        x = cluster::attention_block(b, block_spec(cfg, p + ".blk" + std::to_string(i), cfg.stage1_dims[r], true),
                                     x, ca.neighborhoods, levels, valid);
    }
    if (r < cfg.rounds) out.laterals[static_cast<std::size_t>(r)] = x;
  }
  out.tokens = x;

  if (!bmaps.empty()) {
    counting::Pause pause;
    Var total;
    int used = 0;
    for (std::size_t r = 0; r < score_vars.size(); ++r) {
      if (std::find(round_mask[r].begin(), round_mask[r].end(), 1) == round_mask[r].end()) continue;
      Var mse = ops::masked_mse(t, score_vars[r], round_targets[r], round_mask[r]);
      total = used++ ? ops::add_scalars(t, total, mse) : mse;
    }
    out.alloc_loss = used ? ops::scale(t, total, 1.0 / used) : ops::masked_mse(t, score_vars[0], round_targets[0], round_mask[0]);
  }
  return out;
}

}  // namespace arta::stage1
