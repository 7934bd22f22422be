#include "avse/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "avse/metrics.hpp"

namespace avse {

void PpoConfig::validate() const {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "ppo: sigma must be positive");
  require(epsilon > 0.0 && epsilon < 1.0, ErrorCode::InvalidArgument,
          "ppo: epsilon must lie in (0, 1)");
  require(beta >= 0.0, ErrorCode::InvalidArgument, "ppo: beta must be non-negative");
  require(gamma >= 0.0, ErrorCode::InvalidArgument, "ppo: gamma must be non-negative");
  require(lr > 0.0, ErrorCode::InvalidArgument, "ppo: lr must be positive");
  require(epochs > 0, ErrorCode::InvalidArgument, "ppo: epochs must be positive");
}

Tensor sample_action(const Tensor& mu, double sigma, uint64_t seed) {
  require(sigma >= 0.0, ErrorCode::InvalidArgument, "sample_action: negative sigma");
  Tensor action = mu;
  if (sigma == 0.0) return action;
  Rng rng(seed);
  for (double& v : action.v) v += sigma * rng.gaussian();
  return action;
}

Tensor sample_action(const Tape& tape, DiffTensor mu, double sigma, uint64_t seed) {
  return sample_action(tape.val(mu), sigma, seed);
}

namespace {

double log_norm_const(size_t d, double sigma) {
  return -double(d) * (std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi));
}

}  // namespace

DiffTensor log_prob(Tape& tape, const Tensor& action, DiffTensor mu, double sigma) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "log_prob: sigma must be positive");
  require(tape.val(mu).same_shape(action), ErrorCode::InvalidArgument,
          "log_prob: shape mismatch");
  DiffTensor diff = tape.sub_const(mu, action);
  DiffTensor quad = tape.s_mul_const(tape.dot(diff, diff), -1.0 / (2.0 * sigma * sigma));
  return tape.s_add_const(quad, log_norm_const(action.size(), sigma));
}

double log_prob_value(const Tensor& action, const Tensor& mu, double sigma) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "log_prob: sigma must be positive");
  require(mu.same_shape(action), ErrorCode::InvalidArgument, "log_prob: shape mismatch");
  double quad = 0.0;
  for (size_t i = 0; i < mu.v.size(); ++i) {
    const double d = mu.v[i] - action.v[i];
    quad += d * d;
  }
  return -quad / (2.0 * sigma * sigma) + log_norm_const(action.size(), sigma);
}

DiffTensor kl_policies(Tape& tape, DiffTensor mu_rl, const Tensor& mu_base, double sigma) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "kl_policies: sigma must be positive");
  require(tape.val(mu_rl).same_shape(mu_base), ErrorCode::InvalidArgument,
          "kl_policies: shape mismatch");
  DiffTensor diff = tape.sub_const(mu_rl, mu_base);
  return tape.s_mul_const(tape.dot(diff, diff), 1.0 / (2.0 * sigma * sigma));
}

double kl_policies_value(const Tensor& mu_rl, const Tensor& mu_base, double sigma) {
  require(sigma > 0.0, ErrorCode::InvalidArgument, "kl_policies: sigma must be positive");
  require(mu_rl.same_shape(mu_base), ErrorCode::InvalidArgument,
          "kl_policies: shape mismatch");
  double quad = 0.0;
  for (size_t i = 0; i < mu_rl.v.size(); ++i) {
    const double d = mu_rl.v[i] - mu_base.v[i];
    quad += d * d;
  }
  return quad / (2.0 * sigma * sigma);
}

DiffTensor objective_L(Tape& tape, double reward_R, DiffTensor kl, double beta) {
  require(std::isfinite(reward_R), ErrorCode::InvalidArgument, "objective_L: non-finite R");
  return tape.s_add_const(tape.s_mul_const(kl, -beta), reward_R);
}

DiffTensor ppo_clip_loss(Tape& tape, DiffTensor ratio, DiffTensor L, double epsilon) {
  require(tape.scalar(ratio) > 0.0, ErrorCode::InvalidArgument,
          "ppo_clip_loss: ratio must be positive");
  const double l_bar = tape.scalar(L);  // gradient-stopped coefficient
  DiffTensor unclipped = tape.s_mul_const(ratio, l_bar);
  DiffTensor clipped =
      tape.s_mul_const(tape.s_clip(ratio, 1.0 - epsilon, 1.0 + epsilon), l_bar);
  return tape.s_mul_const(tape.s_min(unclipped, clipped), -1.0);
}

DiffTensor total_loss(Tape& tape, DiffTensor clip_loss, DiffTensor si_loss, double gamma) {
  return tape.s_add(clip_loss, tape.s_mul_const(si_loss, gamma));
}

std::vector<BaseCacheEntry> build_base_cache(const AvseModel& base,
                                             const std::vector<Scene>& scenes,
                                             const RewardModelInterface& reward) {
  std::vector<BaseCacheEntry> cache;
  cache.reserve(scenes.size());
  for (const Scene& sc : scenes) {
    Tape tape;
    ForwardTrace tr = base.forward(tape, sc.noisy, sc.visual);
    BaseCacheEntry e;
    e.mu_base = tape.val(tr.mask_mean);
    e.y_base = tr.enhanced_wave;
    e.record = reward.score(e.y_base, RewardContext{sc.clean, sc.noisy});
    cache.push_back(std::move(e));
  }
  return cache;
}

namespace {

Tensor frozen_mask(const AvseModel& model, const Waveform& x, const VisualStream& v) {
  Tape tape;
  ModelBinding b = model.bind(tape);
  DiffTensor latent = model.encode(tape, b, x);
  const int k = tape.val(latent).shape[1];
  DiffTensor vproj = model.visual_frontend(tape, b, v, k);
  return tape.val(model.separate(tape, b, latent, vproj));
}

PolicyStep step_scene(AvseModel& policy, const AvseModel& prev_snapshot,
                      const BaseCacheEntry& base, const Scene& scene,
                      const RewardModelInterface& reward, const PpoConfig& cfg,
                      AdamState& adam, uint64_t action_seed, bool keep_tensors) {
  Tape tape;
  ForwardTrace tr = policy.forward(tape, scene.noisy, scene.visual);
  // By value: later tape ops reallocate node storage, so a reference into
  // tape.val() would not survive past the next node.
  const Tensor mu_rl = tape.val(tr.mask_mean);

  const Tensor mu_old = frozen_mask(prev_snapshot, scene.noisy, scene.visual);
  const Tensor action = sample_action(mu_rl, cfg.sigma, action_seed);

  DiffTensor logp_new = log_prob(tape, action, tr.mask_mean, cfg.sigma);
  const double logp_old = log_prob_value(action, mu_old, cfg.sigma);
  DiffTensor ratio = tape.s_exp(tape.s_add_const(logp_new, -logp_old));

  DiffTensor action_leaf = tape.leaf(action, false);
  DiffTensor y_rl_node =
      policy.decode(tape, tr.binding, tr.latent, action_leaf, int(scene.noisy.size()));
  Waveform y_rl;
  y_rl.sample_rate = scene.noisy.sample_rate;
  y_rl.samples = tape.val(y_rl_node).v;

  const RewardContext ctx{scene.clean, scene.noisy};
  const RewardRecord rec_rl = reward.score(y_rl, ctx);
  const double reward_R = relative_reward(rec_rl, base.record);

  DiffTensor kl = kl_policies(tape, tr.mask_mean, base.mu_base, cfg.sigma);
  DiffTensor obj = objective_L(tape, reward_R, kl, cfg.beta);
  DiffTensor clip = ppo_clip_loss(tape, ratio, obj, cfg.epsilon);
  DiffTensor si = si_snr_loss(tape, scene.clean, tr.enhanced);
  DiffTensor step_loss = tape.s_add(total_loss(tape, clip, si, cfg.gamma),
                                    tape.s_mul_const(kl, cfg.beta));

  const double loss_value = tape.scalar(step_loss);
  require(std::isfinite(loss_value), ErrorCode::NumericalFailure,
          "non-finite step loss on scene " + std::to_string(scene.id) +
              " (ratio=" + std::to_string(tape.scalar(ratio)) +
              ", kl=" + std::to_string(tape.scalar(kl)) + ")");

  tape.backward(step_loss);

  std::vector<Tensor> grads;
  grads.reserve(tr.binding.leaves.size());
  for (DiffTensor leaf : tr.binding.leaves) {
    const Tensor& g = tape.grad(leaf);
    require(g.all_finite(), ErrorCode::NumericalFailure,
            "non-finite gradient on scene " + std::to_string(scene.id));
    grads.push_back(g);
  }
  adam_step(policy.params(), grads, adam, cfg.lr);

  PolicyStep st;
  if (keep_tensors) {
    st.mu_rl = mu_rl;
    st.mu_base = base.mu_base;
    st.mu_old = mu_old;
    st.action = action;
  }
  st.logp_new = tape.scalar(logp_new);
  st.logp_old = logp_old;
  st.ratio = tape.scalar(ratio);
  st.kl = tape.scalar(kl);
  st.reward_R = reward_R;
  st.objective_L = tape.scalar(obj);
  st.clip_loss = tape.scalar(clip);
  st.total_loss = loss_value;
  st.si_snr_rl = si_snr(scene.clean, y_rl);
  st.sentiment_rl = rec_rl.sentiment;
  st.sentiment_base = base.record.sentiment;
  st.clip_active = st.ratio < 1.0 - cfg.epsilon || st.ratio > 1.0 + cfg.epsilon;
  st.description_rl = rec_rl.description;
  return st;
}

}  // namespace

PolicyStep policy_step(AvseModel& policy, const AvseModel& prev_snapshot,
                       const BaseCacheEntry& base, const Scene& scene,
                       const RewardModelInterface& reward, const PpoConfig& cfg,
                       AdamState& adam, uint64_t action_seed) {
  cfg.validate();
  return step_scene(policy, prev_snapshot, base, scene, reward, cfg, adam, action_seed,
                    true);
}

EpochStats finetune_epoch(AvseModel& policy, const AvseModel& prev_snapshot,
                          const std::vector<BaseCacheEntry>& base_cache,
                          const std::vector<Scene>& scenes,
                          const RewardModelInterface& reward, const PpoConfig& cfg,
                          AdamState& adam, int epoch_index) {
  cfg.validate();
  require(base_cache.size() == scenes.size(), ErrorCode::InvalidArgument,
          "finetune_epoch: base cache does not match scenes");
  require(!scenes.empty(), ErrorCode::InvalidArgument, "finetune_epoch: no scenes");

  EpochStats stats;
  stats.epoch = epoch_index;
  stats.scenes = int(scenes.size());
  stats.mean_ratio = 0.0;  // the struct default is the neutral 1.0

  for (size_t i = 0; i < scenes.size(); ++i) {
    const uint64_t action_seed =
        derive_seed(cfg.seed, seed_stream::kAction,
                    uint64_t(epoch_index) * scenes.size() + i);
    PolicyStep st = step_scene(policy, prev_snapshot, base_cache[i], scenes[i], reward,
                               cfg, adam, action_seed, false);

    SceneLog log;
    log.epoch = epoch_index;
    log.scene_id = scenes[i].id;
    log.reward_R = st.reward_R;
    log.kl = st.kl;
    log.kl_per_element = st.kl / double(base_cache[i].mu_base.size());
    log.ratio = st.ratio;
    log.clip_active = st.clip_active;
    log.sentiment_rl = st.sentiment_rl;
    log.sentiment_base = st.sentiment_base;
    log.si_snr_rl = st.si_snr_rl;
    log.total_loss = st.total_loss;
    log.description_rl = st.description_rl;
    stats.steps.push_back(std::move(log));

    stats.mean_reward += st.reward_R;
    stats.mean_kl += st.kl;
    stats.mean_kl_per_element += stats.steps.back().kl_per_element;
    stats.mean_sentiment += st.sentiment_rl;
    stats.mean_si_snr += st.si_snr_rl;
    stats.mean_ratio += st.ratio;
    if (st.clip_active) stats.clip_fraction += 1.0;
    if (i == 0) stats.first_ratio = st.ratio;
  }

  const double n = double(scenes.size());
  stats.mean_reward /= n;
  stats.mean_kl /= n;
  stats.mean_kl_per_element /= n;
  stats.mean_sentiment /= n;
  stats.mean_si_snr /= n;
  stats.mean_ratio /= n;
  stats.clip_fraction /= n;
  return stats;
}

FinetuneResult run_finetune(AvseModel& policy, const std::vector<Scene>& scenes,
                            const RewardModelInterface& reward, const PpoConfig& cfg,
                            AdamState& adam,
                            const std::function<void(const SceneLog&)>& log_sink,
                            const std::function<void(int, const AvseModel&)>& epoch_sink) {
  cfg.validate();
  const AvseModel base = policy.snapshot();
  const std::vector<BaseCacheEntry> cache = build_base_cache(base, scenes, reward);

  FinetuneResult result;
  for (int e = 0; e < cfg.epochs; ++e) {
    const AvseModel prev = policy.snapshot();
    EpochStats stats = finetune_epoch(policy, prev, cache, scenes, reward, cfg, adam, e);
    if (log_sink)
      for (const SceneLog& l : stats.steps) log_sink(l);
    if (epoch_sink) epoch_sink(e, policy);
    result.epochs.push_back(std::move(stats));
  }
  return result;
}

}  // namespace avse
