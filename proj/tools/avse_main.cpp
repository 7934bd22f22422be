#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "avse/harness.hpp"

namespace {

using avse::ErrorCode;
using avse::ExperimentConfig;
using nlohmann::json;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::IoError:
      return 3;
    case ErrorCode::NumericalFailure:
      return 4;
    default:
      return 2;
  }
}

void print_json_error(const std::string& code, const std::string& message) {
  json j;
  j["error"] = code;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
}

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  std::string out_dir;
  bool print_config = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config_path, "Experiment config JSON path");
  opts.seed_opt = sub->add_option("--seed", opts.seed, "Override master_seed");
  opts.out_opt = sub->add_option("--out", opts.out_dir, "Override out_dir");
  sub->add_flag("--print-config", opts.print_config,
                "Print the resolved config JSON and exit");
}

// Resolves config file + command line overrides. Returns nullopt when
// --print-config consumed the invocation.
std::optional<ExperimentConfig> resolve_config(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = avse::load_config(opts.config_path);
  if (opts.seed_opt->count() > 0) cfg.master_seed = opts.seed;
  if (opts.out_opt->count() > 0) cfg.out_dir = opts.out_dir;
  cfg.validate();
  if (opts.print_config) {
    std::cout << avse::config_to_json_text(cfg);
    return std::nullopt;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual speech enhancement experiments"};
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand("gen-scenes", "Synthesize the scene corpus");
  CommonOpts gen_opts;
  add_common(gen, gen_opts);

  CLI::App* pre = app.add_subcommand("pretrain", "Supervised mask pretraining");
  CommonOpts pre_opts;
  add_common(pre, pre_opts);

  CLI::App* fin = app.add_subcommand("finetune", "Policy-gradient finetuning");
  CommonOpts fin_opts;
  add_common(fin, fin_opts);
  std::string fin_init;
  fin->add_option("--init", fin_init, "Initial checkpoint (default: out_dir/pretrained.ckpt)");

  CLI::App* eva = app.add_subcommand("evaluate", "Held-out table for all arms");
  CommonOpts eva_opts;
  add_common(eva, eva_opts);
  std::string eva_baseline, eva_scalar, eva_interp;
  eva->add_option("--baseline", eva_baseline, "Pretrained checkpoint path");
  eva->add_option("--rl-scalar", eva_scalar, "Scalar-reward checkpoint path");
  eva->add_option("--rl-interpretable", eva_interp, "Interpretable-reward checkpoint path");

  CLI::App* sco = app.add_subcommand("score", "Metric report for a WAV pair");
  std::string sco_ref, sco_est, sco_noisy;
  sco->add_option("--ref", sco_ref, "Reference WAV")->required();
  sco->add_option("--est", sco_est, "Estimate WAV")->required();
  sco->add_option("--noisy", sco_noisy, "Mixture WAV (adds feature block)");

  CLI::App* exp = app.add_subcommand("explain", "Before/after description for one scene");
  CommonOpts exp_opts;
  add_common(exp, exp_opts);
  int exp_scene = 0;
  std::string exp_ckpt;
  exp->add_option("--scene", exp_scene, "Scene id from the manifest")->required();
  exp->add_option("--checkpoint", exp_ckpt,
                  "Checkpoint (default: out_dir/finetuned_interpretable.ckpt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_json_error("invalid-argument", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) {
      auto cfg = resolve_config(gen_opts);
      if (!cfg) return 0;
      const auto records = avse::cmd_gen_scenes(*cfg);
      int train = 0, held = 0;
      for (const auto& r : records) (r.split == "train" ? train : held)++;
      json j;
      j["scenes"] = int(records.size());
      j["train"] = train;
      j["held_out"] = held;
      j["manifest"] = cfg->out_dir + "/manifest.jsonl";
      std::cout << j.dump() << "\n";
    } else if (pre->parsed()) {
      auto cfg = resolve_config(pre_opts);
      if (!cfg) return 0;
      const auto summary = avse::cmd_pretrain(*cfg);
      json j;
      j["steps"] = summary.steps;
      j["epochs"] = int(summary.epoch_mean_loss.size());
      j["final_mean_loss"] =
          summary.epoch_mean_loss.empty() ? 0.0 : summary.epoch_mean_loss.back();
      j["checkpoint"] = summary.checkpoint_path;
      std::cout << j.dump() << "\n";
    } else if (fin->parsed()) {
      auto cfg = resolve_config(fin_opts);
      if (!cfg) return 0;
      const auto summary = avse::cmd_finetune(*cfg, fin_init);
      json j;
      j["epochs"] = summary.epochs;
      j["mean_sentiment"] = summary.final_mean_sentiment;
      j["first_ratio"] = summary.first_epoch_first_ratio;
      j["checkpoint"] = summary.checkpoint_path;
      j["log"] = summary.log_path;
      std::cout << j.dump() << "\n";
    } else if (eva->parsed()) {
      auto cfg = resolve_config(eva_opts);
      if (!cfg) return 0;
      avse::EvalPaths paths;
      if (!eva_baseline.empty()) paths.baseline = eva_baseline;
      if (!eva_scalar.empty()) paths.rl_scalar = eva_scalar;
      if (!eva_interp.empty()) paths.rl_interpretable = eva_interp;
      const auto table = avse::cmd_evaluate(*cfg, paths);
      std::cout << table.to_markdown();
    } else if (sco->parsed()) {
      std::optional<std::string> noisy;
      if (!sco_noisy.empty()) noisy = sco_noisy;
      std::cout << avse::cmd_score_json(sco_ref, sco_est, noisy) << "\n";
    } else if (exp->parsed()) {
      auto cfg = resolve_config(exp_opts);
      if (!cfg) return 0;
      const auto report = avse::cmd_explain(*cfg, exp_scene, exp_ckpt);
      std::cout << report.text;
    }
  } catch (const avse::Error& e) {
    print_json_error(avse::error_code_name(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_json_error("io-error", e.what());
    return 3;
  }
  return 0;
}
