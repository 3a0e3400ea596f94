#pragma once

// Desk-scale training and evaluation around the encoder.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "arta/flops.hpp"
#include "arta/model.hpp"
#include "arta/scene.hpp"

namespace arta {

// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
// concurrency). Each index is handled by exactly one call; the first
// exception is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers = 0);

std::vector<Sample> make_samples(const std::vector<SyntheticScene>& scenes, std::uint64_t first_id = 0);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParameterSet& params, const ParameterSet& grads);
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  ParameterSet m_, v_;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  int steps = 2000;
  double lr = 5e-3;      // peak
  int warmup = 200;      // linear ramp, then cosine decay to zero
  double clip = 0.1;     // global gradient-norm bound; 0 disables
  int batch_size = 16;
  std::uint64_t seed = 0;
  // Selection policy for the first `warm_steps` steps; the config's policy
  // takes over afterwards. Scorers only learn on tokens that exist, so a
  // dense start keeps every frontier populated until they are calibrated,
  // and the later phase shows the head the mixed covers it will be run on.
  std::optional<PolicyKind> warm_policy = PolicyKind::dense;
  int warm_steps = 1000;
};

// Rescales `grads` so their joint L2 norm is at most `bound`.
void clip_global_norm(ParameterSet& grads, double bound);

// Learning rate of `step` under the warmup + cosine schedule.
double scheduled_lr(const TrainOptions& opt, int step);

struct TrainResult {
  ParameterSet params;
  std::vector<double> loss;        // per step, total
  std::vector<double> alloc_loss;  // per step
  std::vector<double> head_loss;   // per step; empty without the head
};

// Minimises allocator MSE (plus head cross-entropy when the config enables
// the head) with Adam. Batches are drawn from a seeded permutation of the
// corpus per epoch. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const EncoderConfig& cfg, const std::vector<Sample>& corpus, ParameterSet params,
                  const TrainOptions& opt);

struct SampleReport {
  stage1::AllocationTrace trace;
  std::array<std::size_t, 4> counts{};
  flops::FlopsReport analytic;
  flops::FlopsReport counted;
  double sq_error = 0;     // allocator, summed over scored tokens
  std::size_t scored = 0;  // tokens with targets
  std::vector<std::int32_t> cell_prediction;  // argmax per cell; empty without head
};

// One solo forward pass with an instrumented op counter.
SampleReport run_sample(const EncoderConfig& cfg, const ParameterSet& params, const Sample& sample);

struct EvalOptions {
  std::uint64_t seed = 0;
  nlohmann::ordered_json dataset = nlohmann::ordered_json::object();
  std::optional<std::string> overlay_dir;
  unsigned workers = 0;
};

struct EvalResult {
  nlohmann::ordered_json manifest;
  std::vector<SampleReport> samples;
};

EvalResult evaluate(const EncoderConfig& cfg, const ParameterSet& params, const std::vector<Sample>& corpus,
                    const EvalOptions& opt = {});

// Ranking AUC (Mann-Whitney, ties count one half). NaN when either class is empty.
double auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

struct SegmentationMetrics {
  std::vector<double> class_accuracy;  // NaN for classes absent from ground truth
  std::vector<double> class_iou;       // NaN for classes absent from both
  double miou = 0;                     // points, over classes with a defined IoU
  double pixel_accuracy = 0;
};
// Per-pixel metrics; each pixel takes its 4×4 cell's prediction.
SegmentationMetrics segmentation_metrics(const std::vector<const LabelMap*>& labels,
                                         const std::vector<const std::vector<std::int32_t>*>& predictions,
                                         int num_classes);

// Round-r selection mask: white over the patches selected in round r.
Image selection_mask(const geom::TokenSet& tokens, const stage1::AllocationTrace& trace, int round);
// The image, dimmed, with the outline of every token of the finest cover.
Image token_overlay(const Image& image, const geom::TokenSet& tokens);

}  // namespace arta
