#include "avse/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace avse {

void ModelConfig::validate() const {
  require(n > 0 && kernel > 0 && stride > 0 && tcn_blocks > 0 && tcn_channels > 0 && d_v > 0,
          ErrorCode::InvalidArgument, "model config fields must be positive");
  require(stride <= kernel, ErrorCode::InvalidArgument, "stride must not exceed kernel");
}

int ModelConfig::latent_frames(int t_samples) const {
  require(t_samples >= kernel, ErrorCode::InvalidArgument, "input shorter than kernel");
  return (t_samples - kernel) / stride + 1;
}

namespace {

constexpr int kDepthKernel = 3;

Tensor init_uniform(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(double(std::max(fan_in, 1)));
  for (double& v : t.v) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

AvseModel::AvseModel(const ModelConfig& config, uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, seed_stream::kWeights));
  const int n = config_.n;
  const int tc = config_.tcn_channels;

  auto add = [&](const std::string& name, Tensor t) {
    names_.push_back(name);
    values_.push_back(std::move(t));
  };

  add("enc.w", init_uniform(rng, {n, config_.kernel}, config_.kernel));
  add("enc.b", Tensor({n}));

  add("vf.dw.w", init_uniform(rng, {config_.d_v, kDepthKernel}, kDepthKernel));
  add("vf.dw.b", Tensor({config_.d_v}));
  add("vf.pw.w", init_uniform(rng, {tc, config_.d_v}, config_.d_v));
  add("vf.pw.b", Tensor({tc}));

  add("fuse.w", init_uniform(rng, {tc, n + tc}, n + tc));
  add("fuse.b", Tensor({tc}));

  for (int i = 0; i < config_.tcn_blocks; ++i) {
    const std::string p = "tcn" + std::to_string(i) + ".";
    add(p + "pw1.w", init_uniform(rng, {tc, tc}, tc));
    add(p + "pw1.b", Tensor({tc}));
    Tensor a1({1});
    a1.v[0] = 0.25;
    add(p + "alpha1", a1);
    add(p + "dw.w", init_uniform(rng, {tc, kDepthKernel}, kDepthKernel));
    add(p + "dw.b", Tensor({tc}));
    Tensor a2({1});
    a2.v[0] = 0.25;
    add(p + "alpha2", a2);
    add(p + "pw2.w", init_uniform(rng, {tc, tc}, tc));
    add(p + "pw2.b", Tensor({tc}));
  }

  add("mask.w", init_uniform(rng, {n, tc}, tc));
  add("mask.b", Tensor({n}));

  add("dec.w", init_uniform(rng, {n, config_.kernel}, n * config_.kernel / config_.stride));
  add("dec.b", Tensor({1}));
}

int AvseModel::index_of(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return int(i);
  fail(ErrorCode::InvalidArgument, "unknown parameter: " + name);
}

Tensor& AvseModel::param(const std::string& name) {
  return values_[size_t(index_of(name))];
}

const Tensor& AvseModel::param(const std::string& name) const {
  return values_[size_t(index_of(name))];
}

size_t AvseModel::param_count() const {
  size_t total = 0;
  for (const Tensor& t : values_) total += t.size();
  return total;
}

ModelBinding AvseModel::bind(Tape& tape) const {
  ModelBinding b;
  b.leaves.reserve(values_.size());
  for (const Tensor& t : values_) b.leaves.push_back(tape.leaf(t, true));
  return b;
}

DiffTensor AvseModel::encode(Tape& tape, const ModelBinding& b, const Waveform& x) const {
  require(int(x.size()) >= config_.kernel, ErrorCode::InvalidArgument,
          "encode: input shorter than kernel");
  DiffTensor xt = tape.leaf(Tensor({int(x.size())}, x.samples), false);
  DiffTensor conv = tape.conv1d(xt, b.leaves[size_t(index_of("enc.w"))],
                                b.leaves[size_t(index_of("enc.b"))], config_.stride);
  return tape.relu(conv);
}

DiffTensor AvseModel::visual_frontend(Tape& tape, const ModelBinding& b,
                                      const VisualStream& v, int target_frames) const {
  require(v.t_v >= 2, ErrorCode::InvalidArgument, "visual_frontend: need at least 2 frames");
  require(v.d_v == config_.d_v, ErrorCode::InvalidArgument,
          "visual_frontend: stream dimension mismatch");
  DiffTensor vt = tape.leaf(Tensor({v.d_v, v.t_v}, v.features), false);
  DiffTensor dw = tape.depthwise(vt, b.leaves[size_t(index_of("vf.dw.w"))],
                                 b.leaves[size_t(index_of("vf.dw.b"))], 1);
  DiffTensor pw = tape.pointwise(dw, b.leaves[size_t(index_of("vf.pw.w"))],
                                 b.leaves[size_t(index_of("vf.pw.b"))]);
  return tape.interp_time(pw, target_frames);
}

DiffTensor AvseModel::separate(Tape& tape, const ModelBinding& b, DiffTensor latent,
                               DiffTensor vproj) const {
  require(tape.val(latent).shape[1] == tape.val(vproj).shape[1], ErrorCode::InvalidArgument,
          "separate: latent and visual frame counts differ");
  DiffTensor fused = tape.concat_rows(latent, vproj);
  DiffTensor h = tape.pointwise(fused, b.leaves[size_t(index_of("fuse.w"))],
                                b.leaves[size_t(index_of("fuse.b"))]);
  for (int i = 0; i < config_.tcn_blocks; ++i) {
    const std::string p = "tcn" + std::to_string(i) + ".";
    const int dilation = 1 << (i % 3);
    DiffTensor r = tape.pointwise(h, b.leaves[size_t(index_of(p + "pw1.w"))],
                                  b.leaves[size_t(index_of(p + "pw1.b"))]);
    r = tape.prelu(r, b.leaves[size_t(index_of(p + "alpha1"))]);
    r = tape.depthwise(r, b.leaves[size_t(index_of(p + "dw.w"))],
                       b.leaves[size_t(index_of(p + "dw.b"))], dilation);
    r = tape.prelu(r, b.leaves[size_t(index_of(p + "alpha2"))]);
    r = tape.pointwise(r, b.leaves[size_t(index_of(p + "pw2.w"))],
                       b.leaves[size_t(index_of(p + "pw2.b"))]);
    h = tape.add(h, r);
  }
  DiffTensor head = tape.pointwise(h, b.leaves[size_t(index_of("mask.w"))],
                                   b.leaves[size_t(index_of("mask.b"))]);
  return tape.sigmoid(head);
}

DiffTensor AvseModel::decode(Tape& tape, const ModelBinding& b, DiffTensor latent,
                             DiffTensor mask, int out_len) const {
  require(tape.val(latent).same_shape(tape.val(mask)), ErrorCode::InvalidArgument,
          "decode: latent and mask shapes differ");
  DiffTensor masked = tape.mul(latent, mask);
  DiffTensor y = tape.tconv(masked, b.leaves[size_t(index_of("dec.w"))],
                            b.leaves[size_t(index_of("dec.b"))], config_.stride);
  return tape.fit_length(y, out_len);
}

ForwardTrace AvseModel::forward(Tape& tape, const Waveform& x, const VisualStream& v) const {
  ForwardTrace tr;
  tr.binding = bind(tape);
  tr.latent = encode(tape, tr.binding, x);
  const int k = tape.val(tr.latent).shape[1];
  tr.vproj = visual_frontend(tape, tr.binding, v, k);
  tr.mask_mean = separate(tape, tr.binding, tr.latent, tr.vproj);
  tr.enhanced = decode(tape, tr.binding, tr.latent, tr.mask_mean, int(x.size()));
  tr.enhanced_wave.sample_rate = x.sample_rate;
  tr.enhanced_wave.samples = tape.val(tr.enhanced).v;
  return tr;
}

Waveform AvseModel::enhance(const Waveform& x, const VisualStream& v) const {
  Tape tape;
  return forward(tape, x, v).enhanced_wave;
}

DiffTensor si_snr_loss(Tape& tape, const Waveform& s, DiffTensor y_hat, double eps) {
  const Tensor& yv = tape.val(y_hat);
  require(yv.shape.size() == 1 && size_t(yv.shape[0]) == s.size(),
          ErrorCode::InvalidArgument, "si_snr_loss: length mismatch");
  const double ref_sq = sum_sq(s.samples);
  require(ref_sq > 0.0, ErrorCode::DegenerateSignal, "si_snr_loss: reference is all zeros");

  const Tensor ref({int(s.size())}, s.samples);
  DiffTensor cref = tape.leaf(ref, false);
  DiffTensor coef = tape.s_mul_const(tape.dot(y_hat, cref), 1.0 / (ref_sq + eps));
  DiffTensor target = tape.scale_const_vec(coef, ref);
  DiffTensor resid = tape.sub(y_hat, target);
  DiffTensor ratio = tape.s_div(tape.s_add_const(tape.dot(target, target), eps),
                                tape.s_add_const(tape.dot(resid, resid), eps));
  return tape.s_mul_const(tape.s_log10(ratio), -10.0);
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  require(params.size() == grads.size(), ErrorCode::InvalidArgument,
          "adam_step: params/grads size mismatch");
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.push_back(Tensor::zeros_like(p));
      state.v.push_back(Tensor::zeros_like(p));
    }
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          ErrorCode::InvalidArgument, "adam_step: state size mismatch");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(beta2, double(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    require(params[i].same_shape(grads[i]) && params[i].same_shape(state.m[i]),
            ErrorCode::InvalidArgument, "adam_step: shape mismatch");
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (size_t j = 0; j < p.v.size(); ++j) {
      m.v[j] = beta1 * m.v[j] + (1.0 - beta1) * g.v[j];
      v.v[j] = beta2 * v.v[j] + (1.0 - beta2) * g.v[j] * g.v[j];
      const double mh = m.v[j] / bc1;
      const double vh = v.v[j] / bc2;
      p.v[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: little-endian binary container.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'V', 'S', 'E', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::ofstream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}

void put_i64(std::ofstream& f, int64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}

void put_string(std::ofstream& f, const std::string& s) {
  put_u32(f, uint32_t(s.size()));
  f.write(s.data(), std::streamsize(s.size()));
}

void put_tensor(std::ofstream& f, const Tensor& t) {
  put_u32(f, uint32_t(t.shape.size()));
  for (int d : t.shape) put_u32(f, uint32_t(d));
  f.write(reinterpret_cast<const char*>(t.v.data()), std::streamsize(t.v.size() * 8));
}

uint32_t get_u32(std::ifstream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  require(bool(f), ErrorCode::FormatError, "truncated checkpoint");
  return v;
}

uint64_t get_u64(std::ifstream& f) {
  uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  require(bool(f), ErrorCode::FormatError, "truncated checkpoint");
  return v;
}

int64_t get_i64(std::ifstream& f) {
  int64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  require(bool(f), ErrorCode::FormatError, "truncated checkpoint");
  return v;
}

std::string get_string(std::ifstream& f) {
  const uint32_t len = get_u32(f);
  require(len <= 4096, ErrorCode::FormatError, "implausible string length in checkpoint");
  std::string s(len, '\0');
  f.read(s.data(), std::streamsize(len));
  require(bool(f), ErrorCode::FormatError, "truncated checkpoint");
  return s;
}

Tensor get_tensor(std::ifstream& f) {
  const uint32_t ndim = get_u32(f);
  require(ndim <= 4, ErrorCode::FormatError, "implausible tensor rank in checkpoint");
  std::vector<int> shape;
  for (uint32_t i = 0; i < ndim; ++i) {
    const uint32_t d = get_u32(f);
    require(d <= (1u << 28), ErrorCode::FormatError, "implausible dimension in checkpoint");
    shape.push_back(int(d));
  }
  Tensor t(std::move(shape));
  f.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(t.v.size() * 8));
  require(bool(f), ErrorCode::FormatError, "truncated checkpoint");
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const AvseModel& model, const AdamState& adam,
                     uint64_t rng_state, int64_t pretrain_steps, int64_t finetune_epochs) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(bool(f), ErrorCode::IoError, "cannot open " + path + " for writing");
  f.write(kMagic, 8);
  put_u32(f, kVersion);

  const ModelConfig& c = model.config();
  put_u32(f, uint32_t(c.n));
  put_u32(f, uint32_t(c.kernel));
  put_u32(f, uint32_t(c.stride));
  put_u32(f, uint32_t(c.tcn_blocks));
  put_u32(f, uint32_t(c.tcn_channels));
  put_u32(f, uint32_t(c.d_v));

  const auto& names = model.param_names();
  put_u32(f, uint32_t(names.size()));
  for (size_t i = 0; i < names.size(); ++i) {
    put_string(f, names[i]);
    put_tensor(f, model.params()[i]);
  }

  const bool has_adam = !adam.m.empty();
  put_u32(f, has_adam ? 1 : 0);
  if (has_adam) {
    require(adam.m.size() == names.size() && adam.v.size() == names.size(),
            ErrorCode::InvalidArgument, "optimizer state does not match parameters");
    put_i64(f, adam.t);
    for (size_t i = 0; i < names.size(); ++i) put_tensor(f, adam.m[i]);
    for (size_t i = 0; i < names.size(); ++i) put_tensor(f, adam.v[i]);
  }

  put_u64(f, rng_state);
  put_i64(f, pretrain_steps);
  put_i64(f, finetune_epochs);
  require(bool(f), ErrorCode::IoError, "short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), ErrorCode::IoError, "cannot open " + path);
  char magic[8] = {};
  f.read(magic, 8);
  require(bool(f) && std::memcmp(magic, kMagic, 8) == 0, ErrorCode::FormatError,
          "not a checkpoint file");
  const uint32_t version = get_u32(f);
  require(version == kVersion, ErrorCode::UnsupportedFormat,
          "unsupported checkpoint version");

  Checkpoint ck;
  ck.config.n = int(get_u32(f));
  ck.config.kernel = int(get_u32(f));
  ck.config.stride = int(get_u32(f));
  ck.config.tcn_blocks = int(get_u32(f));
  ck.config.tcn_channels = int(get_u32(f));
  ck.config.d_v = int(get_u32(f));
  ck.config.validate();

  const uint32_t count = get_u32(f);
  require(count <= 4096, ErrorCode::FormatError, "implausible parameter count");
  for (uint32_t i = 0; i < count; ++i) {
    ck.names.push_back(get_string(f));
    ck.values.push_back(get_tensor(f));
  }

  const uint32_t has_adam = get_u32(f);
  if (has_adam) {
    ck.adam.t = get_i64(f);
    for (uint32_t i = 0; i < count; ++i) ck.adam.m.push_back(get_tensor(f));
    for (uint32_t i = 0; i < count; ++i) ck.adam.v.push_back(get_tensor(f));
  }

  ck.rng_state = get_u64(f);
  ck.pretrain_steps = get_i64(f);
  ck.finetune_epochs = get_i64(f);
  return ck;
}

AvseModel model_from_checkpoint(const Checkpoint& ckpt) {
  AvseModel model(ckpt.config, 0);
  require(ckpt.names.size() == model.param_names().size(), ErrorCode::FormatError,
          "checkpoint parameter list does not match config");
  for (size_t i = 0; i < ckpt.names.size(); ++i) {
    require(ckpt.names[i] == model.param_names()[i], ErrorCode::FormatError,
            "checkpoint parameter name mismatch: " + ckpt.names[i]);
    require(ckpt.values[i].same_shape(model.params()[i]), ErrorCode::FormatError,
            "checkpoint parameter shape mismatch: " + ckpt.names[i]);
    model.params()[i] = ckpt.values[i];
  }
  if (!ckpt.adam.m.empty()) {
    for (size_t i = 0; i < ckpt.names.size(); ++i) {
      require(ckpt.adam.m[i].same_shape(model.params()[i]) &&
                  ckpt.adam.v[i].same_shape(model.params()[i]),
              ErrorCode::FormatError, "checkpoint optimizer shape mismatch");
    }
  }
  return model;
}

}  // namespace avse
