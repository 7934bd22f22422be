#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avse/model.hpp"
#include "avse/reward.hpp"
#include "avse/rl.hpp"
#include "avse/synth.hpp"

namespace avse {

struct ExperimentConfig {
  int scene_count = 80;
  double duration_s = 1.0;
  int sample_rate = 16000;
  double visual_frame_rate = 25.0;
  std::vector<double> snr_grid = {-18.0, -12.0, -6.0, 0.0, 6.55};
  std::vector<std::string> noise_kinds = {"white", "pink", "babble"};
  ModelConfig model;
  PpoConfig ppo;
  std::string reward = "interpretable";  // or "mos_proxy"
  std::string out_dir = "out";
  uint64_t master_seed = 1;
  int pretrain_steps = 300;
  double pretrain_lr = 0.001;
  int checkpoint_every = 10;  // finetune epochs between checkpoints; 0 = final only

  void validate() const;
};

// JSON round trip; parsing rejects unknown keys so config typos fail loudly.
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

struct SceneRecord {
  int id = 0;
  uint64_t seed = 0;
  std::string split;  // "train" or "held_out"
  double snr_db = 0.0;
  std::string noise_kind;
  double f0_hz = 0.0;
  double duration_s = 0.0;
  int sample_rate = 0;
  double measured_snr_db = 0.0;  // from the written files
  std::string clean_path;        // relative to out_dir
  std::string noise_path;
  std::string noisy_path;
};

std::vector<SceneRecord> load_manifest(const std::string& out_dir);
// Reads the scene WAVs and regenerates the visual stream from the record seed.
Scene load_scene(const std::string& out_dir, const SceneRecord& rec, int d_v,
                 double visual_frame_rate);

// Exclusive out_dir ownership for the lifetime of a writing command.
class OutDirLock {
 public:
  explicit OutDirLock(const std::string& out_dir);
  ~OutDirLock();
  OutDirLock(const OutDirLock&) = delete;
  OutDirLock& operator=(const OutDirLock&) = delete;

 private:
  std::string path_;
};

struct EvalRow {
  std::string method;
  bool present = false;
  double si_snr_db = 0.0;
  double stoi = 0.0;
  double sentiment = 0.0;
  double seg_snr_db = 0.0;
};

// Fixed row order: noisy, baseline, rl_scalar, rl_interpretable.
struct EvalTable {
  std::vector<EvalRow> rows;
  std::string to_csv() const;
  std::string to_markdown() const;
};

std::vector<SceneRecord> cmd_gen_scenes(const ExperimentConfig& cfg);

struct PretrainSummary {
  int steps = 0;
  std::vector<double> epoch_mean_loss;
  std::string checkpoint_path;
};
PretrainSummary cmd_pretrain(const ExperimentConfig& cfg);

struct FinetuneSummary {
  int epochs = 0;
  double final_mean_sentiment = 0.0;
  double first_epoch_first_ratio = 1.0;
  std::string checkpoint_path;
  std::string log_path;
};
FinetuneSummary cmd_finetune(const ExperimentConfig& cfg, const std::string& init_checkpoint);

struct EvalPaths {
  std::optional<std::string> baseline;
  std::optional<std::string> rl_scalar;
  std::optional<std::string> rl_interpretable;
};
EvalTable cmd_evaluate(const ExperimentConfig& cfg, const EvalPaths& paths);

struct ExplainReport {
  int scene_id = 0;
  std::string before_description;
  std::string after_description;
  double delta_reward = 0.0;
  double delta_si_snr_db = 0.0;
  double delta_stoi = 0.0;
  std::string text;  // formatted report
};
ExplainReport cmd_explain(const ExperimentConfig& cfg, int scene_id,
                          const std::string& checkpoint_path);

// One-object JSON metric report for two (optionally three) WAV files.
std::string cmd_score_json(const std::string& ref_path, const std::string& est_path,
                           const std::optional<std::string>& noisy_path);

}  // namespace avse
