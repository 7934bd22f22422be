#include "avse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "avse/dsp.hpp"

namespace avse {

namespace {

constexpr int kHarmonics = 5;

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Voiced/silent gate with 10 ms cosine ramps; starts voiced.
std::vector<double> speech_gate(size_t len, int sample_rate, Rng& rng) {
  std::vector<double> gate(len, 0.0);
  const size_t ramp = size_t(std::max(1, sample_rate / 100));
  size_t pos = 0;
  bool voiced = true;
  while (pos < len) {
    const double seg_s = voiced ? rng.uniform(0.15, 0.40) : rng.uniform(0.05, 0.15);
    size_t seg = size_t(seg_s * sample_rate);
    seg = std::min(std::max(seg, size_t(1)), len - pos);
    if (voiced) {
      for (size_t i = 0; i < seg; ++i) {
        double g = 1.0;
        if (i < ramp) g = 0.5 * (1.0 - std::cos(std::numbers::pi * double(i) / double(ramp)));
        const size_t tail = seg - 1 - i;
        if (tail < ramp)
          g = std::min(g, 0.5 * (1.0 - std::cos(std::numbers::pi * double(tail) / double(ramp))));
        gate[pos + i] = g;
      }
    }
    pos += seg;
    voiced = !voiced;
  }
  return gate;
}

}  // namespace

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "white") return NoiseKind::White;
  if (s == "pink") return NoiseKind::Pink;
  if (s == "babble") return NoiseKind::Babble;
  fail(ErrorCode::InvalidArgument, "unknown noise kind: " + s);
}

const char* noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "white";
    case NoiseKind::Pink: return "pink";
    case NoiseKind::Babble: return "babble";
  }
  return "unknown";
}

Waveform generate_clean(double duration_s, double f0_hz, uint64_t seed, int sample_rate) {
  require(duration_s > 0.0, ErrorCode::InvalidArgument, "duration_s must be positive");
  require(sample_rate > 0, ErrorCode::InvalidArgument, "sample_rate must be positive");
  require(f0_hz >= 50.0 && f0_hz <= 400.0, ErrorCode::InvalidArgument,
          "f0_hz must lie in [50, 400]");

  Rng rng(derive_seed(seed, seed_stream::kClean));
  const size_t len = size_t(std::llround(duration_s * sample_rate));

  double phase[kHarmonics];
  for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double env_hz = rng.uniform(2.0, 6.0);
  const double env_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const std::vector<double> gate = speech_gate(len, sample_rate, rng);

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(len);
  for (size_t i = 0; i < len; ++i) {
    const double t = double(i) / sample_rate;
    double s = 0.0;
    for (int k = 1; k <= kHarmonics; ++k)
      s += std::sin(2.0 * std::numbers::pi * f0_hz * k * t + phase[k - 1]) / double(k);
    const double env = 0.55 + 0.45 * std::sin(2.0 * std::numbers::pi * env_hz * t + env_phase);
    w.samples[i] = s * env * gate[i];
  }

  const double peak = peak_abs(w.samples);
  if (peak > 0.0) {
    const double g = 0.9 / peak;
    for (double& x : w.samples) x *= g;
  }
  return w;
}

Waveform generate_noise(NoiseKind kind, double duration_s, uint64_t seed, int sample_rate) {
  require(duration_s > 0.0, ErrorCode::InvalidArgument, "duration_s must be positive");
  require(sample_rate > 0, ErrorCode::InvalidArgument, "sample_rate must be positive");
  const size_t len = size_t(std::llround(duration_s * sample_rate));

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(len, 0.0);

  if (kind == NoiseKind::White) {
    Rng rng(derive_seed(seed, seed_stream::kNoise, 0));
    for (double& x : w.samples) x = rng.gaussian();
  } else if (kind == NoiseKind::Pink) {
    // Spectral shaping: |X_k| proportional to f_k^{-1/2} gives a 1/f power
    // spectrum, i.e. -3 dB per octave.
    Rng rng(derive_seed(seed, seed_stream::kNoise, 1));
    const int n = next_pow2(int(len));
    std::vector<std::complex<double>> spec(size_t(n), {0.0, 0.0});
    for (int k = 1; k <= n / 2; ++k) {
      const double mag = 1.0 / std::sqrt(double(k));
      const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const std::complex<double> v = std::polar(mag, ph);
      spec[size_t(k)] = v;
      if (k < n / 2) spec[size_t(n - k)] = std::conj(v);
    }
    spec[size_t(n / 2)] = std::complex<double>(spec[size_t(n / 2)].real(), 0.0);
    fft_inplace(spec, true);
    for (size_t i = 0; i < len; ++i) w.samples[i] = spec[i].real();
  } else {
    for (int talker = 0; talker < 4; ++talker) {
      const uint64_t s = derive_seed(seed, seed_stream::kBabble, uint64_t(talker));
      Rng pick(s);
      const double f0 = pick.uniform(85.0, 255.0);
      const Waveform voice = generate_clean(duration_s, f0, s, sample_rate);
      for (size_t i = 0; i < len; ++i) w.samples[i] += voice.samples[i];
    }
  }

  const double r = rms(w.samples);
  require(r > 0.0, ErrorCode::DegenerateSignal, "generated noise has zero energy");
  for (double& x : w.samples) x /= r;
  return w;
}

VisualStream visual_features(const Waveform& clean, double frame_rate, int d_v, uint64_t seed) {
  require(frame_rate > 0.0, ErrorCode::InvalidArgument, "frame_rate must be positive");
  require(d_v >= 1, ErrorCode::InvalidArgument, "d_v must be at least 1");

  const int t_v = int(std::ceil(clean.duration_s() * frame_rate));
  VisualStream vs;
  vs.d_v = d_v;
  vs.t_v = t_v;
  vs.frame_rate = frame_rate;
  vs.features.assign(size_t(d_v) * size_t(std::max(t_v, 0)), 0.0);
  if (t_v == 0) return vs;

  for (int f = 0; f < t_v; ++f) {
    const size_t lo = size_t(std::floor(double(f) * clean.sample_rate / frame_rate));
    size_t hi = size_t(std::floor(double(f + 1) * clean.sample_rate / frame_rate));
    hi = std::min(hi, clean.size());
    double e = 0.0;
    for (size_t i = lo; i < hi; ++i) e += clean.samples[i] * clean.samples[i];
    vs.at(0, f) = (hi > lo) ? std::sqrt(e / double(hi - lo)) : 0.0;
  }

  std::vector<double> deriv(size_t(t_v), 0.0);
  for (int f = 1; f < t_v; ++f) deriv[size_t(f)] = vs.at(0, f) - vs.at(0, f - 1);

  std::vector<double> row = deriv;
  for (int r = 1; r < d_v; ++r) {
    std::vector<double> sm(static_cast<size_t>(t_v));
    for (int f = 0; f < t_v; ++f) {
      const double a = row[size_t(std::max(f - 1, 0))];
      const double b = row[size_t(f)];
      const double c = row[size_t(std::min(f + 1, t_v - 1))];
      sm[size_t(f)] = (a + b + c) / 3.0;
    }
    row = sm;
    Rng rng(derive_seed(seed, seed_stream::kVisual, uint64_t(r)));
    for (int f = 0; f < t_v; ++f) vs.at(r, f) = row[size_t(f)] + 0.01 * rng.gaussian();
  }
  return vs;
}

Scene mix_scene(const Waveform& clean, const Waveform& noise, double snr_db, uint64_t seed,
                double visual_frame_rate, int visual_d_v) {
  require(clean.sample_rate == noise.sample_rate, ErrorCode::InvalidArgument,
          "clean and noise sample rates differ");
  require(noise.size() >= clean.size(), ErrorCode::InvalidArgument,
          "noise shorter than clean");
  const double p_clean = sum_sq(clean.samples);
  require(p_clean > 0.0, ErrorCode::DegenerateSignal, "clean signal is all zeros");

  Scene sc;
  sc.clean = clean;
  sc.snr_db = snr_db;
  sc.seed = seed;

  sc.noise.sample_rate = noise.sample_rate;
  sc.noise.samples.assign(noise.samples.begin(), noise.samples.begin() + long(clean.size()));
  const double p_noise = sum_sq(sc.noise.samples);
  require(p_noise > 0.0, ErrorCode::DegenerateSignal, "noise signal is all zeros");

  const double scale = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  for (double& x : sc.noise.samples) x *= scale;

  sc.noisy.sample_rate = clean.sample_rate;
  sc.noisy.samples.resize(clean.size());
  for (size_t i = 0; i < clean.size(); ++i)
    sc.noisy.samples[i] = sc.clean.samples[i] + sc.noise.samples[i];

  const double peak = std::max({peak_abs(sc.noisy.samples), peak_abs(sc.noise.samples),
                                peak_abs(sc.clean.samples)});
  if (peak > 0.9) {
    const double g = 0.9 / peak;
    for (double& x : sc.clean.samples) x *= g;
    for (double& x : sc.noise.samples) x *= g;
    for (double& x : sc.noisy.samples) x *= g;
  }

  sc.visual = visual_features(sc.clean, visual_frame_rate, visual_d_v,
                              derive_seed(seed, seed_stream::kVisual));
  return sc;
}

}  // namespace avse
