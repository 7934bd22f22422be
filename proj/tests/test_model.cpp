#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "avse/common.hpp"
#include "avse/metrics.hpp"
#include "avse/model.hpp"
#include "avse/synth.hpp"
#include "test_support.hpp"

using namespace avse;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n = 8;
  c.kernel = 8;
  c.stride = 4;
  c.tcn_blocks = 2;
  c.tcn_channels = 8;
  c.d_v = 3;
  return c;
}

struct Fixture {
  Waveform noisy;
  Waveform clean;
  VisualStream visual;
};

Fixture make_fixture(uint64_t seed, double dur = 0.05) {
  Fixture f;
  const Waveform clean = generate_clean(dur, 140.0, seed, 16000);
  const Waveform noise = generate_noise(NoiseKind::White, dur, seed + 5, 16000);
  Scene sc = mix_scene(clean, noise, 0.0, seed);
  f.clean = sc.clean;
  f.noisy = sc.noisy;
  f.visual = visual_features(sc.clean, 25.0, 3, seed + 9);
  return f;
}

double loss_value(const AvseModel& model, const Fixture& fx) {
  Tape t;
  ForwardTrace tr = model.forward(t, fx.noisy, fx.visual);
  return t.scalar(si_snr_loss(t, fx.clean, tr.enhanced));
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.n = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.stride = c.kernel + 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  CHECK(c.latent_frames(800) == (800 - c.kernel) / c.stride + 1);
  CHECK_THROWS_AS((void)c.latent_frames(c.kernel - 1), Error);
}

TEST_CASE("parameter initialization is seeded and named") {
  const ModelConfig c = tiny_config();
  const AvseModel a(c, 42), b(c, 42), other(c, 43);

  REQUIRE(a.param_names().size() == a.params().size());
  size_t total = 0;
  for (size_t i = 0; i < a.params().size(); ++i) {
    total += a.params()[i].size();
    CHECK(a.params()[i].v == b.params()[i].v);
    CHECK(a.index_of(a.param_names()[i]) == int(i));
  }
  CHECK(a.param_count() == total);
  CHECK(a.param_count() > 0);

  bool any_diff = false;
  for (size_t i = 0; i < a.params().size(); ++i)
    if (a.params()[i].v != other.params()[i].v) any_diff = true;
  CHECK(any_diff);

  CHECK_THROWS_AS((void)a.index_of("no_such_parameter"), Error);
}

TEST_CASE("forward pass shapes and mask range") {
  const ModelConfig c = tiny_config();
  const AvseModel model(c, 7);
  const Fixture fx = make_fixture(70);
  const int K = c.latent_frames(int(fx.noisy.size()));

  Tape t;
  ForwardTrace tr = model.forward(t, fx.noisy, fx.visual);
  CHECK(t.val(tr.latent).shape == std::vector<int>{c.n, K});
  CHECK(t.val(tr.vproj).shape == std::vector<int>{c.tcn_channels, K});
  CHECK(t.val(tr.mask_mean).shape == std::vector<int>{c.n, K});
  CHECK(t.val(tr.enhanced).shape == std::vector<int>{int(fx.noisy.size())});
  CHECK(tr.enhanced_wave.size() == fx.noisy.size());
  CHECK(tr.enhanced_wave.sample_rate == fx.noisy.sample_rate);

  for (double m : t.val(tr.mask_mean).v) {
    CHECK(m > 0.0);
    CHECK(m < 1.0);
  }
  for (double v : t.val(tr.latent).v) CHECK(v >= 0.0);
}

TEST_CASE("enhance matches the traced forward pass and is deterministic") {
  const AvseModel model(tiny_config(), 8);
  const Fixture fx = make_fixture(80);

  Tape t;
  ForwardTrace tr = model.forward(t, fx.noisy, fx.visual);
  const Waveform e1 = model.enhance(fx.noisy, fx.visual);
  const Waveform e2 = model.enhance(fx.noisy, fx.visual);
  CHECK(e1.samples == e2.samples);
  REQUIRE(e1.size() == tr.enhanced_wave.size());
  for (size_t i = 0; i < e1.size(); ++i)
    CHECK(e1.samples[i] == doctest::Approx(tr.enhanced_wave.samples[i]).epsilon(1e-12));
}

TEST_CASE("per-layer gradients match finite differences") {
  const AvseModel model(tiny_config(), 9);
  const Fixture fx = make_fixture(90);

  Tape tape;
  ModelBinding b = model.bind(tape);
  const DiffTensor latent = model.encode(tape, b, fx.noisy);
  const int K = tape.val(latent).shape[1];
  const DiffTensor vproj = model.visual_frontend(tape, b, fx.visual, K);
  const DiffTensor mask = model.separate(tape, b, latent, vproj);
  const DiffTensor y = model.decode(tape, b, latent, mask, int(fx.noisy.size()));
  tape.backward(si_snr_loss(tape, fx.clean, y));

  double worst_all = 0.0;
  Rng pick(0xc0ffee);
  for (size_t p = 0; p < model.params().size(); ++p) {
    const Tensor& pt = model.params()[p];
    const size_t coords = std::min<size_t>(4, pt.size());
    double worst_layer = 0.0;
    for (size_t c = 0; c < coords; ++c) {
      double fd = 0.0, an = 0.0;
      bool have = false;
      for (int attempt = 0; attempt < 12 && !have; ++attempt) {
        const size_t idx = size_t(pick.next_u64() % pt.size());
        const auto f = [&](double v) {
          AvseModel m2 = model;
          m2.params()[p].v[idx] = v;
          return loss_value(m2, fx);
        };
        const double x0 = pt.v[idx];
        const auto central = [&](double h) { return (f(x0 + h) - f(x0 - h)) / (2.0 * h); };
        const double coarse = central(1e-6);
        const double fine = central(5e-7);
        // A ReLU kink inside the bracket wrecks the central difference
        // itself; the two step sizes only agree where the loss is smooth,
        // and a wrong tape gradient cannot hide behind the resample because
        // both steps would still agree with each other.
        if (std::fabs(coarse - fine) > 3e-5 * std::max(1.0, std::fabs(fine)))
          continue;
        fd = fine;
        an = tape.grad(b.leaves[p]).v[idx];
        have = true;
      }
      if (!have) continue;
      const double err = std::fabs(an - fd) / std::max(1.0, std::fabs(fd));
      worst_layer = std::max(worst_layer, err);
    }
    INFO("parameter " << model.param_names()[p]);
    CHECK(worst_layer < 1e-4);
    worst_all = std::max(worst_all, worst_layer);
  }
  CHECK(worst_all < 1e-3);
}

TEST_CASE("adam first step matches the closed form") {
  std::vector<Tensor> params = {Tensor({3}, {1.0, -2.0, 0.5})};
  const std::vector<Tensor> grads = {Tensor({3}, {0.2, -0.4, 0.0})};
  AdamState st;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  adam_step(params, grads, st, lr, b1, b2, eps);

  // After one step m_hat = g and v_hat = g^2, so the update is
  // lr * g / (|g| + eps) regardless of the betas.
  const std::vector<double> start = {1.0, -2.0, 0.5};
  for (size_t i = 0; i < 3; ++i) {
    const double g = grads[0].v[i];
    const double expect = start[i] - lr * g / (std::sqrt(g * g) + eps);
    CHECK(params[0].v[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(st.t == 1);
}

TEST_CASE("adam drives a quadratic to its minimum") {
  std::vector<Tensor> params = {Tensor({2}, {4.0, -3.0})};
  const std::vector<double> target = {1.0, 2.0};
  AdamState st;
  for (int step = 0; step < 800; ++step) {
    std::vector<Tensor> grads = {Tensor({2})};
    for (size_t i = 0; i < 2; ++i)
      grads[0].v[i] = 2.0 * (params[0].v[i] - target[i]);
    adam_step(params, grads, st, 0.05);
  }
  for (size_t i = 0; i < 2; ++i)
    CHECK(std::fabs(params[0].v[i] - target[i]) < 1e-3);
}

TEST_CASE("adam rejects mismatched shapes") {
  std::vector<Tensor> params = {Tensor({3})};
  AdamState st;
  std::vector<Tensor> good = {Tensor({3})};
  adam_step(params, good, st, 0.01);
  std::vector<Tensor> bad = {Tensor({4})};
  CHECK_THROWS_AS(adam_step(params, bad, st, 0.01), Error);
  std::vector<Tensor> wrong_count = {Tensor({3}), Tensor({3})};
  CHECK_THROWS_AS(adam_step(params, wrong_count, st, 0.01), Error);
}

TEST_CASE("checkpoint round trip is bit exact") {
  testsup::TempDir dir("ckpt");
  const std::string path = dir.path() + "/model.ckpt";

  AvseModel model(tiny_config(), 11);
  AdamState st;
  {
    std::vector<Tensor> grads;
    for (const Tensor& p : model.params()) {
      Tensor g(p.shape);
      for (size_t i = 0; i < g.size(); ++i) g.v[i] = 0.01 * double(i % 7) - 0.03;
      grads.push_back(std::move(g));
    }
    adam_step(model.params(), grads, st, 0.001);
  }
  save_checkpoint(path, model, st, 0xdeadbeef, 123, 45);

  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.config == model.config());
  CHECK(ck.names == model.param_names());
  REQUIRE(ck.values.size() == model.params().size());
  for (size_t i = 0; i < ck.values.size(); ++i) {
    CHECK(ck.values[i].shape == model.params()[i].shape);
    CHECK(ck.values[i].v == model.params()[i].v);
  }
  CHECK(ck.adam.t == st.t);
  REQUIRE(ck.adam.m.size() == st.m.size());
  for (size_t i = 0; i < st.m.size(); ++i) {
    CHECK(ck.adam.m[i].v == st.m[i].v);
    CHECK(ck.adam.v[i].v == st.v[i].v);
  }
  CHECK(ck.rng_state == 0xdeadbeef);
  CHECK(ck.pretrain_steps == 123);
  CHECK(ck.finetune_epochs == 45);

  const AvseModel restored = model_from_checkpoint(ck);
  const Fixture fx = make_fixture(110);
  const Waveform a = model.enhance(fx.noisy, fx.visual);
  const Waveform b = restored.enhance(fx.noisy, fx.visual);
  CHECK(a.samples == b.samples);
}

TEST_CASE("checkpoint loader rejects damaged files") {
  testsup::TempDir dir("ckpt_bad");
  const std::string path = dir.path() + "/model.ckpt";
  AvseModel model(tiny_config(), 12);
  AdamState st;
  save_checkpoint(path, model, st, 1, 0, 0);

  SUBCASE("missing file") {
    CHECK_THROWS_AS((void)load_checkpoint(dir.path() + "/nope.ckpt"), Error);
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("JUNKJUNK", 8);
    f.close();
    try {
      (void)load_checkpoint(path);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::FormatError);
    }
  }
  SUBCASE("truncated") {
    const std::string bytes = testsup::read_file(path);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), long(bytes.size() / 2));
    f.close();
    CHECK_THROWS_AS((void)load_checkpoint(path), Error);
  }
  SUBCASE("tampered shape") {
    Checkpoint ck = load_checkpoint(path);
    ck.values[0].shape[0] += 1;
    CHECK_THROWS_AS((void)model_from_checkpoint(ck), Error);
  }
  SUBCASE("tampered name") {
    Checkpoint ck = load_checkpoint(path);
    ck.names[0] = "bogus";
    CHECK_THROWS_AS((void)model_from_checkpoint(ck), Error);
  }
}

TEST_CASE("pretraining a tiny model reduces the loss") {
  const ModelConfig c = tiny_config();
  AvseModel model(c, 13);
  const Fixture fx = make_fixture(130, 0.1);

  const double before = loss_value(model, fx);
  AdamState st;
  for (int step = 0; step < 40; ++step) {
    Tape t;
    ModelBinding b = model.bind(t);
    const DiffTensor latent = model.encode(t, b, fx.noisy);
    const DiffTensor vproj =
        model.visual_frontend(t, b, fx.visual, t.val(latent).shape[1]);
    const DiffTensor mask = model.separate(t, b, latent, vproj);
    const DiffTensor y = model.decode(t, b, latent, mask, int(fx.noisy.size()));
    t.backward(si_snr_loss(t, fx.clean, y));
    std::vector<Tensor> grads;
    for (const DiffTensor h : b.leaves) grads.push_back(t.grad(h));
    adam_step(model.params(), grads, st, 0.001);
  }
  const double after = loss_value(model, fx);
  CHECK(after < before - 1.0);
}
