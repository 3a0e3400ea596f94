#include "arta/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

namespace arta {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<Sample> make_samples(const std::vector<SyntheticScene>& scenes, std::uint64_t first_id) {
  std::vector<Sample> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i)
    out.push_back(make_sample(scenes[i].image, scenes[i].labels, first_id + i));
  return out;
}

// ---------------------------------------------------------------------------
// Training

void Adam::step(ParameterSet& params, const ParameterSet& grads) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto& [name, w] : params) {
    const Tensor& g = grads.get(name);
    if (!m_.contains(name)) {
      m_.set(name, Tensor(w.shape(), 0.0));
      v_.set(name, Tensor(w.shape(), 0.0));
    }
    Tensor& m = m_.get_mut(name);
    Tensor& v = v_.get_mut(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void clip_global_norm(ParameterSet& grads, double bound) {
  double sq = 0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= bound) return;
  const double f = bound / norm;
  for (auto& [name, g] : grads)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= f;
}

double scheduled_lr(const TrainOptions& opt, int step) {
  if (step < opt.warmup) return opt.lr * (step + 1) / opt.warmup;
  const double span = std::max(1, opt.steps - opt.warmup);
  const double progress = std::min(1.0, (step - opt.warmup) / span);
  return opt.lr * 0.5 * (1 + std::cos(std::numbers::pi * progress));
}

TrainResult train(const EncoderConfig& model_cfg, const std::vector<Sample>& corpus, ParameterSet params,
                  const TrainOptions& opt) {
  if (corpus.empty()) throw InputError("train: empty corpus");
  EncoderConfig warm_cfg = model_cfg;
  if (opt.warm_policy) warm_cfg.policy.kind = *opt.warm_policy;
  if (opt.batch_size < 1) throw InputError("train: batch_size must be at least 1");
  TrainResult res;
  Adam adam(opt.lr);
  const Rng root(opt.seed);
  std::vector<std::size_t> order(corpus.size());
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;

  ForwardOptions fo;
  fo.stage1.training = true;
  fo.allocator_only = !model_cfg.sanity_head;

  for (int step = 0; step < opt.steps; ++step) {
    std::vector<std::size_t> pick;
    while (pick.size() < static_cast<std::size_t>(opt.batch_size) && pick.size() < corpus.size()) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng r = root.split(epoch++);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
        cursor = 0;
      }
      pick.push_back(order[cursor++]);
    }
    std::sort(pick.begin(), pick.end());
    std::vector<const Sample*> batch;
    for (std::size_t i : pick) batch.push_back(&corpus[i]);

    Tape tape;
    Binder binder(tape, params);
    fo.stage1.batch_index = static_cast<std::uint64_t>(step);
    const EncoderConfig& cfg = step < opt.warm_steps ? warm_cfg : model_cfg;
    ForwardResult fr = forward(binder, cfg, batch, fo);
    if (!fr.loss.valid()) throw InputError("train: the corpus has no label maps");
    const double loss = tape.value(fr.loss).item();
    const double alloc = tape.value(fr.alloc_loss).item();
    const double head = fr.head_loss.valid() ? tape.value(fr.head_loss).item() : 0.0;
    if (!std::isfinite(loss))
      throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": loss " +
                             std::to_string(loss) + " (allocator " + std::to_string(alloc) + ", head " +
                             std::to_string(head) + ")");
    res.loss.push_back(loss);
    res.alloc_loss.push_back(alloc);
    if (fr.head_loss.valid()) res.head_loss.push_back(head);
    tape.backward(fr.loss);
    ParameterSet grads = binder.gradients();
    if (opt.clip > 0) clip_global_norm(grads, opt.clip);
    adam.set_lr(scheduled_lr(opt, step));
    adam.step(params, grads);
  }
  res.params = std::move(params);
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation

SampleReport run_sample(const EncoderConfig& cfg, const ParameterSet& params, const Sample& sample) {
  SampleReport rep;
  OpCounter counter;
  Tape tape;
  Binder binder(tape, params, false);
  const Sample* batch[1] = {&sample};
  ForwardResult fr;
  counting::install(&counter);
  try {
    fr = forward(binder, cfg, batch);
  } catch (...) {
    counting::install(nullptr);
    throw;
  }
  counting::install(nullptr);

  SampleResult& s = fr.samples[0];
  rep.trace = s.trace;
  for (int l = 0; l < geom::kLevels; ++l) rep.counts[static_cast<std::size_t>(l)] = s.tokens.count(l);
  rep.analytic = flops::count_forward(cfg, rep.trace, rep.counts);
  rep.counted = flops::from_counter(counter);
  rep.analytic.comparisons = rep.counted.comparisons = fr.comparisons;
  for (const auto& rt : rep.trace.rounds)
    for (std::size_t i = 0; i < rt.targets.size(); ++i) {
      rep.sq_error += (rt.scores[i] - rt.targets[i]) * (rt.scores[i] - rt.targets[i]);
      ++rep.scored;
    }
  if (!s.logits.empty()) {
    for (std::size_t c = 0; c < s.logits.rows(); ++c) {
      const auto row = s.logits.row(c);
      rep.cell_prediction.push_back(
          static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return rep;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw DimensionError("auc: length mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average 1-based rank of the tie run
    for (std::size_t t = i; t < j; ++t)
      if (positive[idx[t]]) {
        pos_rank_sum += rank;
        ++npos;
      }
    i = j;
  }
  const std::size_t nneg = scores.size() - npos;
  if (npos == 0 || nneg == 0) return std::nan("");
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

SegmentationMetrics segmentation_metrics(const std::vector<const LabelMap*>& labels,
                                         const std::vector<const std::vector<std::int32_t>*>& predictions,
                                         int num_classes) {
  if (labels.size() != predictions.size()) throw DimensionError("segmentation_metrics: length mismatch");
  const auto C = static_cast<std::size_t>(num_classes);
  std::vector<std::uint64_t> tp(C), fp(C), fn(C);
  std::uint64_t correct = 0, total = 0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const LabelMap& lm = *labels[s];
    const auto& pred = *predictions[s];
    const int cols = lm.width / geom::kCellSide;
    if (pred.size() != static_cast<std::size_t>(cols * (lm.height / geom::kCellSide)))
      throw DimensionError("segmentation_metrics: prediction grid does not match the label map");
    for (int y = 0; y < lm.height; ++y)
      for (int x = 0; x < lm.width; ++x) {
        const std::uint16_t g = lm.at(y, x);
        if (g == LabelMap::kIgnore) continue;
        const auto p = static_cast<std::size_t>(pred[static_cast<std::size_t>((y / geom::kCellSide) * cols + x / geom::kCellSide)]);
        if (g >= C) throw InputError("label " + std::to_string(g) + " exceeds num_classes");
        ++total;
        if (p == g) {
          ++tp[g];
          ++correct;
        } else {
          ++fn[g];
          if (p < C) ++fp[p];
        }
      }
  }
  SegmentationMetrics m;
  double sum = 0;
  int defined = 0;
  for (std::size_t c = 0; c < C; ++c) {
    m.class_accuracy.push_back(tp[c] + fn[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c])
                                             : std::nan(""));
    const std::uint64_t denom = tp[c] + fp[c] + fn[c];
    m.class_iou.push_back(denom ? static_cast<double>(tp[c]) / static_cast<double>(denom) : std::nan(""));
    if (denom) {
      sum += m.class_iou.back();
      ++defined;
    }
  }
  m.miou = defined ? 100.0 * sum / defined : 0.0;
  m.pixel_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return m;
}

Image selection_mask(const geom::TokenSet& tokens, const stage1::AllocationTrace& trace, int round) {
  Image img(tokens.height(), tokens.width());
  const auto parents = tokens.level(round - 1);
  for (std::uint32_t i : trace.rounds[static_cast<std::size_t>(round - 1)].selected) {
    const geom::Rect r = parents[i].rect();
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = 1.0;
  }
  return img;
}

Image token_overlay(const Image& image, const geom::TokenSet& tokens) {
  Image out = image;
  for (double& v : out.rgb) v *= 0.6;
  static constexpr std::array<std::array<double, 3>, 4> kLevelColor{{
      {1.0, 1.0, 1.0}, {1.0, 0.8, 0.1}, {0.2, 1.0, 0.3}, {0.2, 0.7, 1.0}}};
  const auto cover = geom::finest_cover(tokens);
  for (int y = 0; y < tokens.height(); ++y)
    for (int x = 0; x < tokens.width(); ++x) {
      const geom::TokenRef ref = cover[static_cast<std::size_t>(y) * tokens.width() + x];
      const geom::Rect r = tokens.level(ref.level)[static_cast<std::size_t>(ref.index)].rect();
      if (x == r.x0 || y == r.y0)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = kLevelColor[static_cast<std::size_t>(ref.level)][static_cast<std::size_t>(c)];
    }
  return out;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

EvalResult evaluate(const EncoderConfig& cfg, const ParameterSet& params, const std::vector<Sample>& corpus,
                    const EvalOptions& opt) {
  if (corpus.empty()) throw InputError("evaluate: empty corpus");
  EvalResult res;
  res.samples.resize(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { res.samples[i] = run_sample(cfg, params, corpus[i]); },
               opt.workers);

  double sq = 0;
  std::size_t scored = 0;
  std::vector<double> all_scores;
  std::vector<std::uint8_t> positive;
  std::vector<double> totals;
  std::array<std::map<std::size_t, std::size_t>, geom::kLevels> histogram;
  std::array<double, geom::kLevels> mean_count{};
  bool counter_agrees = true;
  for (const SampleReport& r : res.samples) {
    sq += r.sq_error;
    scored += r.scored;
    for (const auto& rt : r.trace.rounds)
      for (std::size_t i = 0; i < rt.targets.size(); ++i) {
        all_scores.push_back(rt.scores[i]);
        positive.push_back(rt.targets[i] > 0 ? 1 : 0);
      }
    totals.push_back(static_cast<double>(r.analytic.total.flops()));
    for (int l = 0; l < geom::kLevels; ++l) {
      ++histogram[static_cast<std::size_t>(l)][r.counts[static_cast<std::size_t>(l)]];
      mean_count[static_cast<std::size_t>(l)] += static_cast<double>(r.counts[static_cast<std::size_t>(l)]);
    }
    counter_agrees = counter_agrees && r.analytic.regions == r.counted.regions;
  }
  const flops::Stats fs = flops::corpus_stats(totals);

  nlohmann::ordered_json m;
  m["config_digest"] = hex_digest(config_digest(cfg));
  m["seed"] = opt.seed;
  m["dataset"] = opt.dataset;
  m["policy"] = policy_name(cfg.policy.kind);
  m["ablation"] = ablation_name(cfg.ablation);
  m["tau"] = cfg.tau;
  m["connectivity"] = static_cast<int>(cfg.connectivity);
  m["flop_convention"] = "1 MAC = 2 FLOPs; exp/tanh/sqrt/div = 1 FLOP each";
  m["samples"] = corpus.size();

  nlohmann::ordered_json metrics;
  metrics["allocator_mse"] = scored ? number_or_null(sq / static_cast<double>(scored)) : nullptr;
  metrics["allocator_auc"] = number_or_null(auc(all_scores, positive));
  if (cfg.sanity_head && std::all_of(corpus.begin(), corpus.end(), [](const Sample& s) { return s.labels.height > 0; })) {
    std::vector<const LabelMap*> lms;
    std::vector<const std::vector<std::int32_t>*> preds;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      lms.push_back(&corpus[i].labels);
      preds.push_back(&res.samples[i].cell_prediction);
    }
    const SegmentationMetrics seg = segmentation_metrics(lms, preds, cfg.num_classes);
    nlohmann::ordered_json acc = nlohmann::ordered_json::array(), iou = nlohmann::ordered_json::array();
    for (double v : seg.class_accuracy) acc.push_back(number_or_null(v));
    for (double v : seg.class_iou) iou.push_back(number_or_null(v));
    metrics["class_pixel_accuracy"] = acc;
    metrics["class_iou"] = iou;
    metrics["miou"] = seg.miou;
    metrics["pixel_accuracy"] = seg.pixel_accuracy;
  }
  metrics["flops"] = {{"mean", fs.mean},
                      {"std", fs.std},
                      {"min", *std::min_element(totals.begin(), totals.end())},
                      {"max", *std::max_element(totals.begin(), totals.end())},
                      {"counter_matches_analytic", counter_agrees}};
  nlohmann::ordered_json tokens;
  for (int l = 0; l < geom::kLevels; ++l) {
    nlohmann::ordered_json h = nlohmann::ordered_json::object();
    for (const auto& [count, freq] : histogram[static_cast<std::size_t>(l)]) h[std::to_string(count)] = freq;
    tokens["level" + std::to_string(l)] = {
        {"mean", mean_count[static_cast<std::size_t>(l)] / static_cast<double>(corpus.size())}, {"histogram", h}};
  }
  metrics["tokens"] = tokens;
  m["metrics"] = metrics;

  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const SampleReport& r = res.samples[i];
    nlohmann::ordered_json k = nlohmann::ordered_json::array();
    for (const auto& rt : r.trace.rounds) k.push_back(rt.k);
    per.push_back({{"id", corpus[i].id}, {"counts", r.counts}, {"k", k}, {"flops", r.analytic.total.flops()}});
  }
  m["per_sample"] = per;
  res.manifest = std::move(m);

  if (opt.overlay_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(*opt.overlay_dir);
    parallel_for(corpus.size(), [&](std::size_t i) {
      const std::string stem = (fs::path(*opt.overlay_dir) / ("sample" + std::to_string(corpus[i].id))).string();
      geom::TokenSet tokens = geom::coarse_grid(corpus[i].image.height, corpus[i].image.width);
      for (int r = 1; r <= 3; ++r) tokens.allocate(res.samples[i].trace.rounds[static_cast<std::size_t>(r - 1)].selected);
      for (int r = 1; r <= 3; ++r)
        write_ppm(stem + "_round" + std::to_string(r) + ".ppm", selection_mask(tokens, res.samples[i].trace, r));
      write_ppm(stem + "_tokens.ppm", token_overlay(corpus[i].image, tokens));
    }, opt.workers);
  }
  return res;
}

}  // namespace arta
