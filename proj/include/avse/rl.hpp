#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avse/model.hpp"
#include "avse/reward.hpp"
#include "avse/synth.hpp"

namespace avse {

struct PpoConfig {
  double sigma = 0.05;    // action noise std
  double epsilon = 0.1;   // clip range
  double beta = 0.0001;   // KL weight
  double gamma = 1.0;     // supervised loss weight
  double lr = 0.001;
  int epochs = 20;
  uint64_t seed = 0;

  void validate() const;
};

// Full record of one policy update on one scene.
struct PolicyStep {
  Tensor mu_rl;
  Tensor mu_base;
  Tensor mu_old;
  Tensor action;
  double logp_new = 0.0;
  double logp_old = 0.0;
  double ratio = 1.0;
  double kl = 0.0;
  double reward_R = 0.0;
  double objective_L = 0.0;
  double clip_loss = 0.0;
  double total_loss = 0.0;  // optimized step loss: clip + gamma*si_snr + beta*kl
  double si_snr_rl = 0.0;
  double sentiment_rl = 0.0;
  double sentiment_base = 0.0;
  bool clip_active = false;
  std::string description_rl;
};

// Scalar view of a PolicyStep, one JSON log line per scene step.
struct SceneLog {
  int epoch = 0;
  int scene_id = 0;
  double reward_R = 0.0;
  double kl = 0.0;
  double kl_per_element = 0.0;
  double ratio = 1.0;
  bool clip_active = false;
  double sentiment_rl = 0.0;
  double sentiment_base = 0.0;
  double si_snr_rl = 0.0;
  double total_loss = 0.0;
  std::string description_rl;
};

struct EpochStats {
  int epoch = 0;
  int scenes = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;              // summed-over-elements KL, averaged over scenes
  double mean_kl_per_element = 0.0;
  double mean_sentiment = 0.0;
  double mean_si_snr = 0.0;
  double clip_fraction = 0.0;
  double first_ratio = 1.0;  // ratio of the first update after the prev refresh
  double mean_ratio = 1.0;
  std::vector<SceneLog> steps;
};

// mu + iid N(0, sigma^2) noise; unclamped so the Gaussian density stays exact.
Tensor sample_action(const Tensor& mu, double sigma, uint64_t seed);
Tensor sample_action(const Tape& tape, DiffTensor mu, double sigma, uint64_t seed);

// Summed diagonal-Gaussian log-density of action under N(mu, sigma^2 I).
DiffTensor log_prob(Tape& tape, const Tensor& action, DiffTensor mu, double sigma);
double log_prob_value(const Tensor& action, const Tensor& mu, double sigma);

// KL(N(mu_rl, s^2 I) || N(mu_base, s^2 I)) = ||mu_rl - mu_base||^2 / (2 s^2).
DiffTensor kl_policies(Tape& tape, DiffTensor mu_rl, const Tensor& mu_base, double sigma);
double kl_policies_value(const Tensor& mu_rl, const Tensor& mu_base, double sigma);

// L = R - beta * kl; R is a constant (the reward model is frozen).
DiffTensor objective_L(Tape& tape, double reward_R, DiffTensor kl, double beta);

// -min(ratio * L, clip(ratio, 1-eps, 1+eps) * L) with L treated as a
// gradient-stopped coefficient; gradient flows through ratio only.
DiffTensor ppo_clip_loss(Tape& tape, DiffTensor ratio, DiffTensor L, double epsilon);

DiffTensor total_loss(Tape& tape, DiffTensor clip_loss, DiffTensor si_loss, double gamma);

// Frozen per-scene outputs of the base policy, computed once per run.
struct BaseCacheEntry {
  Tensor mu_base;
  Waveform y_base;  // mean-mask decode
  RewardRecord record;
};

std::vector<BaseCacheEntry> build_base_cache(const AvseModel& base,
                                             const std::vector<Scene>& scenes,
                                             const RewardModelInterface& reward);

// One pass over the scenes with one optimizer step per scene. prev_snapshot
// supplies logp_old; base_cache supplies the frozen comparison outputs.
EpochStats finetune_epoch(AvseModel& policy, const AvseModel& prev_snapshot,
                          const std::vector<BaseCacheEntry>& base_cache,
                          const std::vector<Scene>& scenes,
                          const RewardModelInterface& reward, const PpoConfig& cfg,
                          AdamState& adam, int epoch_index);

// Epoch driver: snapshots the base once, refreshes prev each epoch.
struct FinetuneResult {
  std::vector<EpochStats> epochs;
};

FinetuneResult run_finetune(
    AvseModel& policy, const std::vector<Scene>& scenes, const RewardModelInterface& reward,
    const PpoConfig& cfg, AdamState& adam,
    const std::function<void(const SceneLog&)>& log_sink = {},
    const std::function<void(int, const AvseModel&)>& epoch_sink = {});

// Single-scene update with full intermediates, for tests and the explain flow.
PolicyStep policy_step(AvseModel& policy, const AvseModel& prev_snapshot,
                       const BaseCacheEntry& base, const Scene& scene,
                       const RewardModelInterface& reward, const PpoConfig& cfg,
                       AdamState& adam, uint64_t action_seed);

}  // namespace avse
