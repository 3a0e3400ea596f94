// arta: corpus generation, training, evaluation and FLOPs tables.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "arta/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string policy;
  std::string tau;
  std::string out = "out";
  std::string data;
  int count = 64;
};

void add_common(CLI::App* app, Common& c, bool with_model) {
  app->add_option("--seed", c.seed, "Global seed");
  app->add_option("--out", c.out, "Output directory");
  if (!with_model) return;
  app->add_option("--config", c.config_path, "Encoder config (JSON); defaults to the nano preset");
  app->add_option("--policy", c.policy, "adaptive | dense | random_ratio | oracle_mix");
  app->add_option("--tau", c.tau, "Thresholds a,b,c (default 0.005,0.01,0.02)");
  app->add_option("--data", c.data, "Corpus directory written by 'gen'; synthesised from --seed when absent");
  app->add_option("--count", c.count, "Scenes to synthesise when --data is absent");
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw arta::InputError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw arta::InputError("cannot write " + path.string());
  os << text;
}

std::array<double, 3> parse_tau(const std::string& text) {
  std::array<double, 3> tau{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw arta::InputError("--tau takes exactly three values");
    try {
      std::size_t used = 0;
      tau[i] = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw arta::InputError("--tau: '" + part + "' is not a number");
    }
    ++i;
  }
  if (i != 3) throw arta::InputError("--tau takes exactly three values");
  return tau;
}

arta::EncoderConfig load_config(const Common& c) {
  arta::EncoderConfig cfg =
      c.config_path.empty() ? arta::EncoderConfig::preset("nano") : arta::parse_config(read_file(c.config_path));
  if (!c.policy.empty()) cfg.policy.kind = arta::parse_policy(c.policy);
  if (!c.tau.empty()) cfg.tau = parse_tau(c.tau);
  cfg.policy.seed = cfg.policy.seed ? cfg.policy.seed : c.seed;
  cfg.validate();
  return cfg;
}

arta::SceneSpec scene_spec(const arta::EncoderConfig& cfg) {
  arta::SceneSpec spec;
  spec.height = cfg.image_height;
  spec.width = cfg.image_width;
  spec.num_classes = cfg.num_classes;
  return spec;
}

struct Corpus {
  std::vector<arta::Sample> samples;
  ordered_json descriptor;
};

Corpus load_corpus(const Common& c, const arta::EncoderConfig& cfg, std::uint64_t id_offset = 0) {
  Corpus out;
  if (c.data.empty()) {
    const auto scenes = arta::generate_corpus(c.seed + id_offset, static_cast<std::size_t>(c.count), scene_spec(cfg));
    out.samples = arta::make_samples(scenes);
    out.descriptor = {{"kind", "synthetic"}, {"seed", c.seed + id_offset}, {"count", c.count}};
    return out;
  }
  const fs::path dir(c.data);
  const auto index = nlohmann::json::parse(read_file((dir / "corpus.json").string()));
  std::uint64_t id = 0;
  for (const auto& item : index.at("samples")) {
    const auto img = arta::read_ppm((dir / item.at("image").get<std::string>()).string());
    const auto lab = arta::read_pgm16((dir / item.at("labels").get<std::string>()).string());
    out.samples.push_back(arta::make_sample(img, lab, id++));
  }
  out.descriptor = {{"kind", "directory"}, {"path", c.data}, {"count", out.samples.size()}};
  return out;
}

int cmd_gen(const Common& c) {
  const arta::EncoderConfig cfg = c.config_path.empty() ? arta::EncoderConfig::preset("nano") : load_config(c);
  const auto scenes = arta::generate_corpus(c.seed, static_cast<std::size_t>(c.count), scene_spec(cfg));
  fs::create_directories(c.out);
  ordered_json index;
  index["seed"] = c.seed;
  index["samples"] = ordered_json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu", i);
    const std::string img = std::string("image") + name + ".ppm", lab = std::string("labels") + name + ".pgm";
    arta::write_ppm((fs::path(c.out) / img).string(), scenes[i].image);
    arta::write_pgm16((fs::path(c.out) / lab).string(), scenes[i].labels);
    index["samples"].push_back({{"image", img}, {"labels", lab}, {"regions", scenes[i].regions.size()}});
  }
  write_file(fs::path(c.out) / "corpus.json", index.dump(2) + "\n");
  std::cout << ordered_json{{"written", scenes.size()}, {"out", c.out}}.dump() << "\n";
  return 0;
}

arta::ParameterSet params_for(const arta::EncoderConfig& cfg, const std::string& path, std::uint64_t seed) {
  if (path.empty()) return arta::init_parameters(cfg, seed);
  return arta::load_parameters(path, arta::architecture_digest(cfg));
}

ordered_json train_and_save(const arta::EncoderConfig& cfg, const Common& c, const arta::TrainOptions& topt,
                            const fs::path& out_dir, arta::ParameterSet* trained) {
  const Corpus corpus = load_corpus(c, cfg);
  arta::TrainResult tr = arta::train(cfg, corpus.samples, arta::init_parameters(cfg, c.seed), topt);
  fs::create_directories(out_dir);
  arta::save_parameters((out_dir / "params.bin").string(), tr.params, arta::architecture_digest(cfg));
  write_file(out_dir / "config.json", arta::to_json(cfg).dump(2) + "\n");
  ordered_json log{{"steps", topt.steps},
                   {"lr", topt.lr},
                   {"warmup", topt.warmup},
                   {"clip", topt.clip},
                   {"batch_size", topt.batch_size},
                   {"warm_policy", arta::policy_name(topt.warm_policy.value_or(cfg.policy.kind))},
                   {"warm_steps", topt.warm_steps},
                   {"policy", arta::policy_name(cfg.policy.kind)},
                   {"loss", tr.loss},
                   {"allocator_loss", tr.alloc_loss},
                   {"head_loss", tr.head_loss}};
  write_file(out_dir / "train_log.json", log.dump() + "\n");
  if (trained) *trained = std::move(tr.params);
  return {{"final_loss", tr.loss.empty() ? 0.0 : tr.loss.back()}, {"params", (out_dir / "params.bin").string()}};
}

int cmd_train(const Common& c, const arta::TrainOptions& topt) {
  const arta::EncoderConfig cfg = load_config(c);
  std::cout << train_and_save(cfg, c, topt, c.out, nullptr).dump() << "\n";
  return 0;
}

ordered_json run_eval(const arta::EncoderConfig& cfg, const arta::ParameterSet& params, const Common& c,
                      const fs::path& out_dir) {
  // Held-out scenes use a seed stream apart from the training corpus.
  const Corpus corpus = load_corpus(c, cfg, c.data.empty() ? 0x5eedull : 0);
  arta::EvalOptions eo;
  eo.seed = c.seed;
  eo.dataset = corpus.descriptor;
  eo.overlay_dir = (out_dir / "overlays").string();
  const arta::EvalResult er = arta::evaluate(cfg, params, corpus.samples, eo);
  fs::create_directories(out_dir);
  write_file(out_dir / "manifest.json", er.manifest.dump(2) + "\n");
  return er.manifest["metrics"];
}

int cmd_eval(const Common& c, const std::string& params_path) {
  const arta::EncoderConfig cfg = load_config(c);
  const auto metrics = run_eval(cfg, params_for(cfg, params_path, c.seed), c, c.out);
  std::cout << ordered_json{{"manifest", (fs::path(c.out) / "manifest.json").string()},
                            {"flops", metrics["flops"]}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_flops(const Common& c, const std::string& params_path) {
  const arta::EncoderConfig base = load_config(c);
  const arta::ParameterSet params = params_for(base, params_path, c.seed);
  const Corpus corpus = load_corpus(c, base);
  ordered_json table = ordered_json::array();
  std::printf("%-14s %16s %16s %10s\n", "policy", "mean FLOPs", "std FLOPs", "tokens");
  for (auto kind : {arta::PolicyKind::adaptive, arta::PolicyKind::dense, arta::PolicyKind::random_ratio,
                    arta::PolicyKind::oracle_mix}) {
    arta::EncoderConfig cfg = base;
    cfg.policy.kind = kind;
    std::vector<arta::SampleReport> reps(corpus.samples.size());
    arta::parallel_for(reps.size(), [&](std::size_t i) { reps[i] = arta::run_sample(cfg, params, corpus.samples[i]); });
    std::vector<arta::flops::FlopsReport> fr;
    double tokens = 0;
    for (const auto& r : reps) {
      fr.push_back(r.analytic);
      for (std::size_t n : r.counts) tokens += static_cast<double>(n);
    }
    const auto st = arta::flops::corpus_stats(fr);
    tokens /= static_cast<double>(reps.size());
    std::printf("%-14s %16.0f %16.0f %10.1f\n", std::string(arta::policy_name(kind)).c_str(), st.mean, st.std, tokens);
    table.push_back({{"policy", arta::policy_name(kind)}, {"mean", st.mean}, {"std", st.std}, {"mean_tokens", tokens}});
  }
  fs::create_directories(c.out);
  write_file(fs::path(c.out) / "flops.json", table.dump(2) + "\n");
  return 0;
}

int cmd_ablate(const Common& c, const std::string& name, arta::TrainOptions topt, double oracle_rate) {
  arta::EncoderConfig cfg = load_config(c);
  if (name == "dense" || name == "random_ratio" || name == "oracle_mix") {
    // Policy ablations are training modes: train under the policy itself.
    cfg.policy.kind = arta::parse_policy(name);
    topt.warm_policy.reset();
    if (name == "oracle_mix") cfg.policy.oracle_rate = oracle_rate;
  } else if (name == "stage1_only" || name == "no_aux_image" || name == "no_residual") {
    cfg.ablation = arta::parse_ablation(name);
  } else {
    throw arta::InputError("unknown ablation '" + name + "'");
  }
  cfg.validate();
  const fs::path dir = fs::path(c.out) / name;
  arta::ParameterSet params;
  train_and_save(cfg, c, topt, dir, &params);
  // Pre-training modes are evaluated with the adaptive allocator they train.
  arta::EncoderConfig eval_cfg = cfg;
  if (cfg.policy.kind != arta::PolicyKind::dense) eval_cfg.policy.kind = arta::PolicyKind::adaptive;
  const auto metrics = run_eval(eval_cfg, params, c, dir);
  std::cout << ordered_json{{"ablation", name}, {"metrics", metrics}}.dump() << "\n";
  return 0;
}

void add_train_options(CLI::App* app, arta::TrainOptions& topt) {
  app->add_option("--steps", topt.steps, "Optimiser steps");
  app->add_option("--lr", topt.lr, "Peak learning rate");
  app->add_option("--warmup", topt.warmup, "Warmup steps before cosine decay");
  app->add_option("--clip", topt.clip, "Gradient-norm bound, 0 to disable");
  app->add_option("--batch", topt.batch_size, "Scenes per step");
  app->add_option("--warm-steps", topt.warm_steps, "Steps trained with dense selection first");
}

int report_error(const char* type, const std::string& message, int code) {
  std::cerr << ordered_json{{"error", {{"type", type}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive mixed-resolution token allocation"};
  app.require_subcommand(1);
  Common c;
  arta::TrainOptions topt;
  std::string params_path, ablation;
  double oracle_rate = 0.5;

  auto* gen = app.add_subcommand("gen", "Synthesise a labelled scene corpus");
  add_common(gen, c, false);
  gen->add_option("--config", c.config_path, "Encoder config (image size, classes)");
  gen->add_option("--count", c.count, "Number of scenes");

  auto* train = app.add_subcommand("train", "Train the allocator (and the sanity head when enabled)");
  add_common(train, c, true);
  add_train_options(train, topt);

  auto* eval = app.add_subcommand("eval", "Evaluate a model; writes manifest.json and overlays");
  add_common(eval, c, true);
  eval->add_option("--params", params_path, "Parameter container; random init from --seed when absent");

  auto* flops = app.add_subcommand("flops", "Per-policy FLOPs table");
  add_common(flops, c, true);
  flops->add_option("--params", params_path, "Parameter container; random init from --seed when absent");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one ablation");
  add_common(ablate, c, true);
  ablate->add_option("name", ablation, "dense | random_ratio | oracle_mix | stage1_only | no_aux_image | no_residual")
      ->required();
  add_train_options(ablate, topt);
  ablate->add_option("--oracle-rate", oracle_rate, "Fraction of training batches that select from targets (oracle_mix)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage", e.what(), 64);
  }
  topt.seed = c.seed;
  try {
    if (*gen) return cmd_gen(c);
    if (*train) return cmd_train(c, topt);
    if (*eval) return cmd_eval(c, params_path);
    if (*flops) return cmd_flops(c, params_path);
    if (*ablate) return cmd_ablate(c, ablation, topt, oracle_rate);
  } catch (const arta::InputError& e) {
    return report_error("input", e.what(), 2);
  } catch (const arta::TrainingDiverged& e) {
    return report_error("diverged", e.what(), 4);
  } catch (const arta::ContractError& e) {
    return report_error("contract", e.what(), 3);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 0;
}
