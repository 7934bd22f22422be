#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "avse/common.hpp"
#include "avse/metrics.hpp"
#include "avse/synth.hpp"
#include "test_support.hpp"

using namespace avse;

namespace {

Waveform wf(std::vector<double> s, int rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  w.samples = std::move(s);
  return w;
}

Waveform noisy_tone(uint64_t seed, double snr_db, double dur = 0.8) {
  const Waveform clean = generate_clean(dur, 140.0, seed, 16000);
  const Waveform noise = generate_noise(NoiseKind::White, dur, seed + 77, 16000);
  Scene sc = mix_scene(clean, noise, snr_db, seed);
  return sc.noisy;
}

}  // namespace

TEST_CASE("si_snr matches the four-sample hand oracle") {
  const Waveform ref = wf({1.0, 0.0, -1.0, 0.0});
  const Waveform est = wf({1.0, 0.1, -1.0, 0.1});

  // By hand with eps = 0: dot = 2, |ref|^2 = 2, so the projection is ref
  // itself; residual [0, 0.1, 0, 0.1] has energy 0.02 and the ratio is
  // 2 / 0.02 = 100, i.e. exactly 20 dB.
  CHECK(std::fabs(si_snr(ref, est, 0.0) - 20.0) < 1e-9);

  // With the default guard epsilon the value is computed by the same formula;
  // replicate it with plain arithmetic.
  double dot = 0.0, ref_sq = 0.0;
  for (size_t i = 0; i < 4; ++i) {
    dot += est.samples[i] * ref.samples[i];
    ref_sq += ref.samples[i] * ref.samples[i];
  }
  const double coef = dot / (ref_sq + kEps);
  double tsq = 0.0, esq = 0.0;
  for (size_t i = 0; i < 4; ++i) {
    const double t = coef * ref.samples[i];
    const double e = est.samples[i] - t;
    tsq += t * t;
    esq += e * e;
  }
  const double oracle = 10.0 * std::log10((tsq + kEps) / (esq + kEps));
  CHECK(si_snr(ref, est) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(std::fabs(si_snr(ref, est) - 20.0) < 1e-5);
}

TEST_CASE("si_snr is invariant to rescaling the estimate") {
  const Waveform ref = generate_clean(0.5, 120.0, 11, 16000);
  Waveform est = noisy_tone(11, 3.0, 0.5);
  const double base = si_snr(ref, est);
  for (double alpha : {0.5, 2.0, 10.0}) {
    Waveform scaled = est;
    for (double& v : scaled.samples) v *= alpha;
    CHECK(std::fabs(si_snr(ref, scaled) - base) < 1e-6);
  }
}

TEST_CASE("si_snr identity is large and corruption lowers it") {
  const Waveform ref = generate_clean(0.5, 150.0, 3, 16000);
  CHECK(si_snr(ref, ref) > 60.0);
  const Waveform bad = noisy_tone(3, -10.0, 0.5);
  const Waveform mid = noisy_tone(3, 5.0, 0.5);
  CHECK(si_snr(ref, bad) < si_snr(ref, mid));
}

TEST_CASE("si_snr rejects degenerate input") {
  const Waveform ref = wf({1.0, 0.0, -1.0, 0.0});
  CHECK_THROWS_AS((void)si_snr(ref, wf({1.0, 0.0})), Error);
  CHECK_THROWS_AS((void)si_snr(wf({1.0}), wf({1.0})), Error);
  try {
    (void)si_snr(wf({0.0, 0.0, 0.0, 0.0}), ref);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateSignal);
  }
}

TEST_CASE("segmental_snr matches a three-frame hand oracle") {
  // Frame 1: ref energy 4, error energy 0.04 -> about 20 dB.
  // Frame 2: silent reference -> pinned at -10 dB.
  // Frame 3: exact match -> clamped at +35 dB.
  std::vector<double> ref = {1, 1, 1, 1, 0, 0, 0, 0, 2, -1, 0.5, 1};
  std::vector<double> est = {1.1, 1.1, 1.1, 1.1, 0.3, 0.3, 0.3, 0.3, 2, -1, 0.5, 1};
  const double v1 = 10.0 * std::log10(4.0 / (0.04 + kEps));
  const double oracle = (v1 - 10.0 + 35.0) / 3.0;
  CHECK(segmental_snr(wf(ref), wf(est), 4) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("segmental_snr clamps very poor frames at -10 dB") {
  const double v = segmental_snr(wf({1, 0, 0, 0}), wf({11, 0, 0, 0}), 4);
  CHECK(v == doctest::Approx(-10.0));
}

TEST_CASE("segmental_snr rejects bad arguments") {
  CHECK_THROWS_AS((void)segmental_snr(wf({1, 2}), wf({1, 2}), 0), Error);
  CHECK_THROWS_AS((void)segmental_snr(wf({1, 2}), wf({1, 2, 3}), 2), Error);
  CHECK_THROWS_AS((void)segmental_snr(wf({1, 2}), wf({1, 2}), 4), Error);
}

TEST_CASE("stoi of a signal with itself is near one") {
  const Waveform x = generate_clean(1.0, 130.0, 21, 16000);
  const double d = stoi(x, x);
  CHECK(d >= 0.99);
  CHECK(d <= 1.0);
}

TEST_CASE("stoi ignores sign and scale of the estimate") {
  const Waveform x = generate_clean(1.0, 170.0, 22, 16000);
  const Waveform y = noisy_tone(22, 2.0, 1.0);
  const double base = stoi(x, y);

  Waveform neg = y;
  for (double& v : neg.samples) v = -v;
  CHECK(std::fabs(stoi(x, neg) - base) < 1e-9);

  Waveform dbl = y;
  for (double& v : dbl.samples) v *= 2.0;
  CHECK(std::fabs(stoi(x, dbl) - base) < 1e-9);
}

TEST_CASE("stoi stays inside the unit interval on arbitrary estimates") {
  const Waveform x = generate_clean(0.8, 110.0, 23, 16000);
  for (uint64_t s = 0; s < 6; ++s) {
    Waveform junk = generate_noise(NoiseKind::White, 0.8, 900 + s, 16000);
    const double d = stoi(x, junk);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("mean stoi rises with mixing SNR") {
  const std::vector<double> snrs = {-10.0, 0.0, 10.0};
  std::vector<double> means;
  for (double snr : snrs) {
    double acc = 0.0;
    const int n = 6;
    for (int i = 0; i < n; ++i) {
      const uint64_t seed = 500 + uint64_t(i);
      const Waveform clean = generate_clean(0.8, 120.0 + 10.0 * i, seed, 16000);
      const Waveform noise = generate_noise(NoiseKind::White, 0.8, seed + 33, 16000);
      Scene sc = mix_scene(clean, noise, snr, seed);
      acc += stoi(sc.clean, sc.noisy);
    }
    means.push_back(acc / n);
  }
  CHECK(means[0] < means[1]);
  CHECK(means[1] < means[2]);
}

TEST_CASE("stoi rejects unusable input") {
  const Waveform x = generate_clean(1.0, 140.0, 24, 16000);
  Waveform shorter = x;
  shorter.samples.resize(x.size() / 2);
  CHECK_THROWS_AS((void)stoi(x, shorter), Error);

  Waveform other_rate = x;
  other_rate.sample_rate = 8000;
  CHECK_THROWS_AS((void)stoi(x, other_rate), Error);

  const Waveform tiny = generate_clean(0.2, 140.0, 25, 16000);
  try {
    (void)stoi(tiny, tiny);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSignal);
  }
}

TEST_CASE("acoustic_features reports a faithful estimate as clean") {
  const Waveform ref = generate_clean(0.8, 125.0, 31, 16000);
  const Waveform noise = generate_noise(NoiseKind::Pink, 0.8, 131, 16000);
  Scene sc = mix_scene(ref, noise, 0.0, 31);

  const AcousticFeatures f = acoustic_features(sc.clean, sc.clean, sc.noisy);
  CHECK(f.distortion_index < 1e-6);
  CHECK(f.residual_noise_db < -60.0);
  CHECK(f.intelligibility_proxy >= 0.99);
  CHECK(f.improvement_db == doctest::Approx(si_snr(sc.clean, sc.clean) -
                                            si_snr(sc.clean, sc.noisy))
                                .epsilon(1e-12));
  CHECK(f.residual_noise_db == doctest::Approx(-si_snr(sc.clean, sc.clean)).epsilon(1e-12));
  CHECK(f.loudness_db ==
        doctest::Approx(20.0 * std::log10(rms(sc.clean.samples) + kEps)).epsilon(1e-12));
}

TEST_CASE("acoustic_features flags an unrelated estimate as distorted") {
  const Waveform ref = generate_clean(0.8, 135.0, 32, 16000);
  Waveform orth = generate_noise(NoiseKind::White, 0.8, 232, 16000);
  const AcousticFeatures f = acoustic_features(ref, orth, ref);
  CHECK(f.distortion_index > 0.9);
  CHECK(f.residual_noise_db > 0.0);
}

TEST_CASE("acoustic_features rejects degenerate input") {
  const Waveform ref = generate_clean(0.5, 140.0, 33, 16000);
  Waveform zeros = ref;
  for (double& v : zeros.samples) v = 0.0;
  CHECK_THROWS_AS((void)acoustic_features(zeros, ref, ref), Error);

  Waveform shorter = ref;
  shorter.samples.pop_back();
  CHECK_THROWS_AS((void)acoustic_features(ref, shorter, ref), Error);
}

TEST_CASE("metric_report mirrors the individual metrics") {
  const Waveform ref = generate_clean(0.8, 145.0, 41, 16000);
  const Waveform est = noisy_tone(41, 4.0, 0.8);
  const MetricReport r = metric_report(ref, est, 256);
  CHECK(r.si_snr_db == doctest::Approx(si_snr(ref, est)).epsilon(1e-12));
  CHECK(r.stoi == doctest::Approx(stoi(ref, est)).epsilon(1e-12));
  CHECK(r.seg_snr_db == doctest::Approx(segmental_snr(ref, est, 256)).epsilon(1e-12));
}
