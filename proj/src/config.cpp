#include "arta/config.hpp"

#include <cstdio>

#include "arta/geometry.hpp"

namespace arta {

namespace {

template <class T, std::size_t N>
std::array<T, N> read_array(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != N)
    throw InputError(std::string("config: '") + key + "' must be an array of " + std::to_string(N));
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<T>();
  return out;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InputError("config: " + what);
}

}  // namespace

std::string_view policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::adaptive: return "adaptive";
    case PolicyKind::dense: return "dense";
    case PolicyKind::random_ratio: return "random_ratio";
    case PolicyKind::oracle_mix: return "oracle_mix";
  }
  return "adaptive";
}

PolicyKind parse_policy(std::string_view name) {
  if (name == "adaptive") return PolicyKind::adaptive;
  if (name == "dense") return PolicyKind::dense;
  if (name == "random_ratio") return PolicyKind::random_ratio;
  if (name == "oracle_mix") return PolicyKind::oracle_mix;
  throw InputError("unknown policy '" + std::string(name) + "'");
}

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::stage1_only: return "stage1_only";
    case Ablation::no_aux_image: return "no_aux_image";
    case Ablation::no_residual: return "no_residual";
  }
  return "none";
}

Ablation parse_ablation(std::string_view name) {
  if (name == "none") return Ablation::none;
  if (name == "stage1_only") return Ablation::stage1_only;
  if (name == "no_aux_image") return Ablation::no_aux_image;
  if (name == "no_residual") return Ablation::no_residual;
  throw InputError("unknown ablation '" + std::string(name) + "'");
}

int EncoderConfig::grid_rows() const { return geom::padded_size(image_height, image_width).height / 32; }
int EncoderConfig::grid_cols() const { return geom::padded_size(image_height, image_width).width / 32; }

void EncoderConfig::validate() const {
  require(image_height > 0 && image_width > 0, "image size must be positive");
  require(rounds == 3, "exactly 3 allocation rounds are supported");
  for (double t : tau) require(t > 0, "every threshold must be positive");
  for (int i = 0; i < 4; ++i) {
    require(stage1_dims[i] > 0 && stage2_dims[i] > 0, "dims must be positive");
    require(stage1_blocks[i] >= 0 && stage2_blocks[i] >= 0, "block counts must be non-negative");
    require(stage1_dims[i] % heads(stage1_dims[i]) == 0 && stage2_dims[i] % heads(stage2_dims[i]) == 0,
            "head count must divide every width");
    require(stage2_dims[i] == stage1_dims[3 - i], "stage-2 dims must mirror stage-1 dims");
  }
  for (int i = 0; i + 1 < 4; ++i)
    require(stage1_dims[i] == 2 * stage1_dims[i + 1], "stage-1 dims must halve every round");
  require(mlp_ratio >= 1, "mlp_ratio must be ≥ 1");
  require(cluster_size >= 1, "cluster_size must be ≥ 1");
  require(num_classes >= 2, "num_classes must be ≥ 2");
  require(scorer_hidden >= 0, "scorer_hidden must be ≥ 0");
  require(ln_eps > 0, "ln_eps must be positive");
  for (double r : policy.ratios) require(r >= 0 && r <= 1, "ratios must lie in [0, 1]");
  require(policy.oracle_rate >= 0 && policy.oracle_rate <= 1, "oracle_rate must lie in [0, 1]");
}

EncoderConfig EncoderConfig::preset(std::string_view name) {
  EncoderConfig c;
  if (name == "nano") return c;
  c.image_height = c.image_width = 512;
  c.cluster_size = 32;
  c.scorer_hidden = 0;
  c.num_classes = 150;
  if (name == "tiny") {
    c.name = "tiny";
    c.stage1_dims = {512, 256, 128, 64};
    c.stage1_blocks = {1, 1, 1, 0};
    c.stage2_dims = {64, 128, 256, 512};
    c.stage2_blocks = {4, 4, 16, 4};
  } else if (name == "small") {
    c.name = "small";
    c.stage1_dims = {512, 256, 128, 64};
    c.stage1_blocks = {2, 2, 2, 0};
    c.stage2_dims = {64, 128, 256, 512};
    c.stage2_blocks = {4, 6, 24, 3};
  } else if (name == "base") {
    c.name = "base";
    c.stage1_dims = {768, 384, 192, 96};
    c.stage1_blocks = {2, 2, 2, 0};
    c.stage2_dims = {96, 192, 384, 768};
    c.stage2_blocks = {8, 6, 18, 4};
  } else {
    throw InputError("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

nlohmann::ordered_json to_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["image_height"] = c.image_height;
  j["image_width"] = c.image_width;
  j["stage1_dims"] = c.stage1_dims;
  j["stage1_blocks"] = c.stage1_blocks;
  j["stage2_dims"] = c.stage2_dims;
  j["stage2_blocks"] = c.stage2_blocks;
  j["rounds"] = c.rounds;
  j["tau"] = c.tau;
  j["policy"] = {{"kind", policy_name(c.policy.kind)},
                 {"ratios", c.policy.ratios},
                 {"oracle_rate", c.policy.oracle_rate},
                 {"seed", c.policy.seed}};
  j["scorer_hidden"] = c.scorer_hidden;
  j["mlp_ratio"] = c.mlp_ratio;
  j["cluster_size"] = c.cluster_size;
  j["num_classes"] = c.num_classes;
  j["connectivity"] = static_cast<int>(c.connectivity);
  j["ablation"] = ablation_name(c.ablation);
  j["sanity_head"] = c.sanity_head;
  j["ln_eps"] = c.ln_eps;
  return j;
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  try {
    // Missing keys fall back to the named preset (default nano).
    EncoderConfig c = EncoderConfig::preset(j.value("name", std::string("nano")));
    c.name = j.value("name", c.name);
    c.image_height = j.value("image_height", c.image_height);
    c.image_width = j.value("image_width", c.image_width);
    if (j.contains("stage1_dims")) c.stage1_dims = read_array<int, 4>(j, "stage1_dims");
    if (j.contains("stage1_blocks")) c.stage1_blocks = read_array<int, 4>(j, "stage1_blocks");
    if (j.contains("stage2_dims")) c.stage2_dims = read_array<int, 4>(j, "stage2_dims");
    if (j.contains("stage2_blocks")) c.stage2_blocks = read_array<int, 4>(j, "stage2_blocks");
    c.rounds = j.value("rounds", c.rounds);
    if (j.contains("tau")) c.tau = read_array<double, 3>(j, "tau");
    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      c.policy.kind = parse_policy(p.value("kind", std::string("adaptive")));
      if (p.contains("ratios")) c.policy.ratios = read_array<double, 3>(p, "ratios");
      c.policy.oracle_rate = p.value("oracle_rate", c.policy.oracle_rate);
      c.policy.seed = p.value("seed", c.policy.seed);
    }
    c.scorer_hidden = j.value("scorer_hidden", c.scorer_hidden);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.cluster_size = j.value("cluster_size", c.cluster_size);
    c.num_classes = j.value("num_classes", c.num_classes);
    const int conn = j.value("connectivity", static_cast<int>(c.connectivity));
    if (conn != 4 && conn != 8) throw InputError("config: connectivity must be 4 or 8");
    c.connectivity = static_cast<Connectivity>(conn);
    c.ablation = parse_ablation(j.value("ablation", std::string(ablation_name(c.ablation))));
    c.sanity_head = j.value("sanity_head", c.sanity_head);
    c.ln_eps = j.value("ln_eps", c.ln_eps);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

std::string serialize(const EncoderConfig& cfg) { return to_json(cfg).dump(); }

EncoderConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::uint64_t config_digest(const EncoderConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : serialize(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t architecture_digest(const EncoderConfig& cfg) {
  EncoderConfig c = cfg;
  c.policy = Policy{};
  c.tau = EncoderConfig{}.tau;
  c.connectivity = Connectivity::four;
  return config_digest(c);
}

std::string hex_digest(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

}  // namespace arta
