#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "arta/boundary.hpp"

namespace arta {

enum class PolicyKind { adaptive, dense, random_ratio, oracle_mix };

// How frontier tokens are chosen for refinement.
//   adaptive      score > tau (the operating mode)
//   dense         every frontier token
//   random_ratio  round(ratio·N) tokens drawn uniformly without replacement
//   oracle_mix    like adaptive, but a seeded fraction of training batches
//                 select with ground-truth scores instead of predictions
struct Policy {
  PolicyKind kind = PolicyKind::adaptive;
  std::array<double, 3> ratios{0.25, 0.25, 0.25};
  double oracle_rate = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const Policy&) const = default;
};

// Structural ablations of the allocation block and the encoder layout.
enum class Ablation { none, stage1_only, no_aux_image, no_residual };

std::string_view policy_name(PolicyKind kind);
PolicyKind parse_policy(std::string_view name);
std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);

struct EncoderConfig {
  std::string name = "nano";
  int image_height = 64;
  int image_width = 64;
  // Index i of the stage-1 arrays is allocation round i (0 = pre-allocation);
  // index k of the stage-2 arrays is refinement round k+1.
  std::array<int, 4> stage1_dims{64, 32, 16, 8};
  std::array<int, 4> stage1_blocks{1, 1, 1, 0};
  std::array<int, 4> stage2_dims{8, 16, 32, 64};
  std::array<int, 4> stage2_blocks{1, 1, 2, 1};
  int rounds = 3;
  std::array<double, 3> tau{0.005, 0.01, 0.02};
  Policy policy;
  // 0 → half the round's width. Nano fixes 16: a 4-unit scorer on its 8-wide
  // round-3 tokens tends to lose every unit during training.
  int scorer_hidden = 16;
  int mlp_ratio = 4;
  int cluster_size = 8;
  int num_classes = 4;
  Connectivity connectivity = Connectivity::four;
  Ablation ablation = Ablation::none;
  bool sanity_head = true;
  double ln_eps = 1e-5;

  // Throws InputError naming the first violated constraint.
  void validate() const;

  int heads(int dim) const { return dim >= 32 ? dim / 32 : 1; }
  int scorer_width(int round) const {
    return scorer_hidden > 0 ? scorer_hidden : std::max(1, stage1_dims[round] / 2);
  }
  int grid_rows() const;
  int grid_cols() const;

  bool operator==(const EncoderConfig&) const = default;

  // Nano (desk scale), Tiny, Small, Base.
  static EncoderConfig preset(std::string_view name);
};

nlohmann::ordered_json to_json(const EncoderConfig& cfg);
EncoderConfig config_from_json(const nlohmann::json& j);
// Canonical serialisation: compact JSON with fixed key order.
std::string serialize(const EncoderConfig& cfg);
EncoderConfig parse_config(std::string_view text);
// FNV-1a over the canonical serialisation.
std::uint64_t config_digest(const EncoderConfig& cfg);
// Digest of the fields that shape the parameter set; policy, thresholds and
// connectivity are reset to defaults first, so one set of weights can be
// evaluated under every policy.
std::uint64_t architecture_digest(const EncoderConfig& cfg);
std::string hex_digest(std::uint64_t d);

}  // namespace arta
