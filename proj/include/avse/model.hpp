#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avse/synth.hpp"
#include "avse/tape.hpp"
#include "avse/waveform.hpp"

namespace avse {

struct ModelConfig {
  int n = 64;             // encoder channels
  int kernel = 16;        // encoder window, samples
  int stride = 8;         // encoder hop, samples
  int tcn_blocks = 3;
  int tcn_channels = 64;
  int d_v = 4;

  void validate() const;
  // K = floor((T - kernel)/stride) + 1.
  int latent_frames(int t_samples) const;
  bool operator==(const ModelConfig&) const = default;
};

// Per-tape handles for every parameter, index-aligned with param order.
struct ModelBinding {
  std::vector<DiffTensor> leaves;
};

struct ForwardTrace {
  DiffTensor latent;     // W, shape (N, K)
  DiffTensor vproj;      // shape (tcn_channels, K)
  DiffTensor mask_mean;  // mu, shape (N, K), entries in (0, 1)
  DiffTensor enhanced;   // vector, length = input length
  Waveform enhanced_wave;
  ModelBinding binding;
};

// Mask-based enhancer: ReLU conv encoder, visual projection, TCN separator
// with sigmoid mask head, transposed-conv decoder.
class AvseModel {
 public:
  AvseModel(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& param_names() const { return names_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  std::vector<Tensor>& params() { return values_; }
  const std::vector<Tensor>& params() const { return values_; }
  size_t param_count() const;  // total scalar parameters

  AvseModel snapshot() const { return *this; }

  ModelBinding bind(Tape& tape) const;

  DiffTensor encode(Tape& tape, const ModelBinding& b, const Waveform& x) const;
  DiffTensor visual_frontend(Tape& tape, const ModelBinding& b, const VisualStream& v,
                             int target_frames) const;
  DiffTensor separate(Tape& tape, const ModelBinding& b, DiffTensor latent,
                      DiffTensor vproj) const;
  DiffTensor decode(Tape& tape, const ModelBinding& b, DiffTensor latent, DiffTensor mask,
                    int out_len) const;

  ForwardTrace forward(Tape& tape, const Waveform& x, const VisualStream& v) const;

  // Inference without gradient bookkeeping.
  Waveform enhance(const Waveform& x, const VisualStream& v) const;

  int index_of(const std::string& name) const;

 private:
  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// L = -si_snr(s, y_hat), built on the tape; differentiable w.r.t. y_hat.
DiffTensor si_snr_loss(Tape& tape, const Waveform& s, DiffTensor y_hat, double eps = kEps);

struct AdamState {
  int64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// One bias-corrected update over an ordered parameter list; state is lazily
// sized on first use and must keep the same shapes afterwards.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> values;
  AdamState adam;
  uint64_t rng_state = 0;
  int64_t pretrain_steps = 0;
  int64_t finetune_epochs = 0;
};

void save_checkpoint(const std::string& path, const AvseModel& model, const AdamState& adam,
                     uint64_t rng_state, int64_t pretrain_steps, int64_t finetune_epochs);
Checkpoint load_checkpoint(const std::string& path);
// Rebuilds a model from a checkpoint; rejects name/shape inconsistencies.
AvseModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace avse
