#include "arta/model.hpp"

#include <algorithm>
#include <map>

#include "arta/layers.hpp"

namespace arta {

Sample make_sample(const Image& image, const LabelMap& labels, std::uint64_t id) {
  const auto p = geom::padded_size(image.height, image.width);
  Sample s;
  s.image = pad_image(image, p.height, p.width);
  if (labels.height > 0) {
    if (labels.height != image.height || labels.width != image.width)
      throw InputError("label map is " + std::to_string(labels.height) + "×" + std::to_string(labels.width) +
                       " but its image is " + std::to_string(image.height) + "×" + std::to_string(image.width));
    s.labels = pad_labels(labels, p.height, p.width);
  }
  s.id = id;
  return s;
}

ParameterSet init_parameters(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet ps;
  const Rng root(seed);
  Rng r1 = root.split(1), r2 = root.split(2), r3 = root.split(3);
  stage1::init_parameters(ps, cfg, r1);
  stage2::init_parameters(ps, cfg, r2);
  if (cfg.sanity_head) layers::init_linear(ps, "head", cfg.stage2_dims[0], cfg.num_classes, r3);
  return ps;
}

std::vector<std::int32_t> cell_labels(const LabelMap& labels) {
  const int cs = geom::kCellSide;
  if (labels.height % cs || labels.width % cs) throw ContractError("cell_labels: size must be a multiple of 4");
  std::vector<std::int32_t> out;
  std::map<std::uint16_t, int> votes;
  for (int cy = 0; cy < labels.height / cs; ++cy)
    for (int cx = 0; cx < labels.width / cs; ++cx) {
      votes.clear();
      for (int y = cy * cs; y < cy * cs + cs; ++y)
        for (int x = cx * cs; x < cx * cs + cs; ++x)
          if (labels.at(y, x) != LabelMap::kIgnore) ++votes[labels.at(y, x)];
      std::int32_t best = -1;
      int best_votes = 0;
      for (const auto& [label, n] : votes)
        if (n > best_votes) {
          best = label;
          best_votes = n;
        }
      out.push_back(best);
    }
  return out;
}

ForwardResult forward(Binder& b, const EncoderConfig& cfg, std::span<const Sample* const> batch,
                      const ForwardOptions& opt) {
  Tape& t = b.tape();
  stage1::Input in;
  const bool labelled = std::all_of(batch.begin(), batch.end(), [](const Sample* s) { return s->labels.height > 0; });
  for (const Sample* s : batch) {
    in.images.push_back(&s->image);
    if (labelled) in.labels.push_back(&s->labels);
    in.sample_ids.push_back(s->id);
  }
  const stage1::Output s1 = stage1::run_stage1(b, cfg, in, opt.stage1);

  ForwardResult res;
  res.comparisons = s1.comparisons;
  res.alloc_loss = s1.alloc_loss;
  res.samples.resize(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    res.samples[s].tokens = s1.sets[s];
    res.samples[s].trace = s1.traces[s];
  }
  if (opt.allocator_only) {
    res.loss = res.alloc_loss;
    return res;
  }

  const stage2::Output s2 = stage2::run_stage2(b, cfg, s1, opt.stage1);
  res.comparisons += s2.comparisons;
  const Tensor& dense = t.value(s2.dense);
  const std::size_t cells = dense.rows() / std::max<std::size_t>(batch.size(), 1);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    res.samples[s].emitted = stage2::extract(t, s2, s1.sets, s1.layout, static_cast<int>(s));
    res.samples[s].dense = ops::slice_rows(dense, s * cells, cells);
  }

  if (cfg.sanity_head) {
    Var logits;
    {
      counting::Region region("head");
      logits = layers::linear(b, "head", s2.dense);
    }
    const Tensor& lv = t.value(logits);
    for (std::size_t s = 0; s < batch.size(); ++s) res.samples[s].logits = ops::slice_rows(lv, s * cells, cells);
    if (labelled) {
      counting::Pause pause;
      std::vector<std::int32_t> labels;
      for (const Sample* s : batch) {
        const auto c = cell_labels(s->labels);
        labels.insert(labels.end(), c.begin(), c.end());
      }
      res.head_loss = ops::cross_entropy(t, logits, labels);
    }
  }
  if (labelled) {
    counting::Pause pause;
    res.loss = res.head_loss.valid() ? ops::add_scalars(t, res.alloc_loss, res.head_loss) : res.alloc_loss;
  }
  return res;
}

}  // namespace arta
