#include "avse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "avse/dsp.hpp"

namespace avse {

double si_snr(const Waveform& ref, const Waveform& est, double eps) {
  require(ref.size() == est.size(), ErrorCode::InvalidArgument,
          "si_snr: length mismatch");
  require(ref.size() >= 2, ErrorCode::InvalidArgument, "si_snr: signals too short");
  const double ref_sq = sum_sq(ref.samples);
  require(ref_sq > 0.0, ErrorCode::DegenerateSignal, "si_snr: reference is all zeros");

  double dot = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) dot += est.samples[i] * ref.samples[i];
  const double coef = dot / (ref_sq + eps);

  double target_sq = 0.0, resid_sq = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double t = coef * ref.samples[i];
    const double e = est.samples[i] - t;
    target_sq += t * t;
    resid_sq += e * e;
  }
  return 10.0 * std::log10((target_sq + eps) / (resid_sq + eps));
}

namespace {

constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiHop = 128;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr int kStoiSegment = 30;
constexpr double kStoiMinFreq = 150.0;
constexpr double kStoiDynRange = 40.0;
constexpr double kStoiBeta = -15.0;

// Bin ranges [lo, hi) of the 15 one-third-octave bands on the 512-point grid.
const std::vector<std::pair<int, int>>& third_octave_bins() {
  static const std::vector<std::pair<int, int>> bands = [] {
    std::vector<std::pair<int, int>> b;
    const double bin_hz = double(kStoiRate) / kStoiFft;
    for (int k = 0; k < kStoiBands; ++k) {
      const double cf = kStoiMinFreq * std::pow(2.0, k / 3.0);
      const int lo = int(std::lround(cf / std::pow(2.0, 1.0 / 6.0) / bin_hz));
      const int hi = int(std::lround(cf * std::pow(2.0, 1.0 / 6.0) / bin_hz));
      b.emplace_back(lo, std::min(hi, kStoiFft / 2 + 1));
    }
    return b;
  }();
  return bands;
}

int frame_count(size_t len) {
  if (len < size_t(kStoiFrame)) return 0;
  return int((len - kStoiFrame) / kStoiHop) + 1;
}

// Drops frames whose reference energy is more than 40 dB below the loudest
// frame, then overlap-adds the kept windowed frames back into signals.
void remove_silent_frames(const std::vector<double>& x, const std::vector<double>& y,
                          std::vector<double>& x_out, std::vector<double>& y_out) {
  const int frames = frame_count(x.size());
  require(frames >= 1, ErrorCode::InsufficientSignal, "stoi: signal shorter than one frame");
  const std::vector<double> w = hann_inner(kStoiFrame);

  std::vector<double> energy_db(static_cast<size_t>(frames));
  double max_db = -1e300;
  for (int f = 0; f < frames; ++f) {
    double e = 0.0;
    const size_t base = size_t(f) * kStoiHop;
    for (int i = 0; i < kStoiFrame; ++i) {
      const double v = w[size_t(i)] * x[base + size_t(i)];
      e += v * v;
    }
    energy_db[size_t(f)] = 20.0 * std::log10(std::sqrt(e) + kEps);
    max_db = std::max(max_db, energy_db[size_t(f)]);
  }

  std::vector<int> kept;
  for (int f = 0; f < frames; ++f)
    if (energy_db[size_t(f)] > max_db - kStoiDynRange) kept.push_back(f);
  require(!kept.empty(), ErrorCode::InsufficientSignal, "stoi: no frames above threshold");

  const size_t out_len = size_t(kept.size() - 1) * kStoiHop + kStoiFrame;
  x_out.assign(out_len, 0.0);
  y_out.assign(out_len, 0.0);
  for (size_t k = 0; k < kept.size(); ++k) {
    const size_t src = size_t(kept[k]) * kStoiHop;
    const size_t dst = k * kStoiHop;
    for (int i = 0; i < kStoiFrame; ++i) {
      x_out[dst + size_t(i)] += w[size_t(i)] * x[src + size_t(i)];
      y_out[dst + size_t(i)] += w[size_t(i)] * y[src + size_t(i)];
    }
  }
}

// Third-octave band envelope, bands x frames.
std::vector<std::vector<double>> band_spectrogram(const std::vector<double>& x) {
  const int frames = frame_count(x.size());
  const std::vector<double> w = hann_inner(kStoiFrame);
  const auto& bands = third_octave_bins();

  std::vector<std::vector<double>> tob(size_t(kStoiBands),
                                       std::vector<double>(size_t(frames), 0.0));
  std::vector<std::complex<double>> buf(static_cast<size_t>(kStoiFft));
  for (int f = 0; f < frames; ++f) {
    const size_t base = size_t(f) * kStoiHop;
    for (int i = 0; i < kStoiFrame; ++i) buf[size_t(i)] = w[size_t(i)] * x[base + size_t(i)];
    std::fill(buf.begin() + kStoiFrame, buf.end(), std::complex<double>(0.0, 0.0));
    fft_inplace(buf, false);
    for (int j = 0; j < kStoiBands; ++j) {
      double e = 0.0;
      for (int b = bands[size_t(j)].first; b < bands[size_t(j)].second; ++b)
        e += std::norm(buf[size_t(b)]);
      tob[size_t(j)][size_t(f)] = std::sqrt(e);
    }
  }
  return tob;
}

}  // namespace

double stoi(const Waveform& ref, const Waveform& est) {
  require(ref.size() == est.size(), ErrorCode::InvalidArgument, "stoi: length mismatch");
  require(ref.sample_rate == est.sample_rate, ErrorCode::InvalidArgument,
          "stoi: sample rate mismatch");

  const Waveform r10 = resample(ref, kStoiRate);
  const Waveform e10 = resample(est, kStoiRate);

  std::vector<double> x, y;
  remove_silent_frames(r10.samples, e10.samples, x, y);

  const int frames = frame_count(x.size());
  require(frames >= kStoiSegment, ErrorCode::InsufficientSignal,
          "stoi: fewer than 384 ms of non-silent content");

  // The measure is scale free, but the eps guards below are not; pin the
  // working scale so a quiet but clean pair scores the same as a loud one.
  double xe = 0.0;
  for (double v : x) xe += v * v;
  require(xe > 0.0, ErrorCode::DegenerateSignal, "stoi: reference is silent");
  const double gain = 1.0 / std::sqrt(xe / double(x.size()));
  for (double& v : x) v *= gain;
  for (double& v : y) v *= gain;

  const auto xt = band_spectrogram(x);
  const auto yt = band_spectrogram(y);

  const double clip = 1.0 + std::pow(10.0, -kStoiBeta / 20.0);
  const int segments = frames - kStoiSegment + 1;

  double acc = 0.0;
  std::vector<double> xs(kStoiSegment), ys(kStoiSegment);
  for (int m = 0; m < segments; ++m) {
    for (int j = 0; j < kStoiBands; ++j) {
      double nx = 0.0, ny = 0.0;
      for (int i = 0; i < kStoiSegment; ++i) {
        xs[size_t(i)] = xt[size_t(j)][size_t(m + i)];
        ys[size_t(i)] = yt[size_t(j)][size_t(m + i)];
        nx += xs[size_t(i)] * xs[size_t(i)];
        ny += ys[size_t(i)] * ys[size_t(i)];
      }
      const double alpha = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < kStoiSegment; ++i) {
        ys[size_t(i)] = std::min(alpha * ys[size_t(i)], clip * xs[size_t(i)]);
        mx += xs[size_t(i)];
        my += ys[size_t(i)];
      }
      mx /= kStoiSegment;
      my /= kStoiSegment;
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int i = 0; i < kStoiSegment; ++i) {
        const double a = xs[size_t(i)] - mx;
        const double b = ys[size_t(i)] - my;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
      }
      acc += sxy / (std::sqrt(sxx) * std::sqrt(syy) + kEps);
    }
  }
  const double d = acc / (double(segments) * kStoiBands);
  return std::clamp(d, 0.0, 1.0);
}

double segmental_snr(const Waveform& ref, const Waveform& est, int frame) {
  require(frame > 0, ErrorCode::InvalidArgument, "segmental_snr: frame must be positive");
  require(ref.size() == est.size(), ErrorCode::InvalidArgument,
          "segmental_snr: length mismatch");
  require(ref.size() >= size_t(frame), ErrorCode::InvalidArgument,
          "segmental_snr: signal shorter than one frame");

  const int frames = int(ref.size() / size_t(frame));
  double acc = 0.0;
  for (int f = 0; f < frames; ++f) {
    const size_t base = size_t(f) * size_t(frame);
    double e_ref = 0.0, e_err = 0.0;
    for (int i = 0; i < frame; ++i) {
      const double r = ref.samples[base + size_t(i)];
      const double d = r - est.samples[base + size_t(i)];
      e_ref += r * r;
      e_err += d * d;
    }
    double v;
    if (e_ref <= 0.0) {
      v = -10.0;
    } else {
      v = std::clamp(10.0 * std::log10(e_ref / (e_err + kEps)), -10.0, 35.0);
    }
    acc += v;
  }
  return acc / frames;
}

AcousticFeatures acoustic_features(const Waveform& ref, const Waveform& est,
                                   const Waveform& noisy) {
  require(ref.size() == est.size() && ref.size() == noisy.size(), ErrorCode::InvalidArgument,
          "acoustic_features: length mismatch");
  const double ref_sq = sum_sq(ref.samples);
  require(ref_sq > 0.0, ErrorCode::DegenerateSignal,
          "acoustic_features: reference is all zeros");

  AcousticFeatures out;
  const double si_est = si_snr(ref, est);
  out.residual_noise_db = -si_est;
  out.improvement_db = si_est - si_snr(ref, noisy);

  double dot = 0.0;
  const double est_sq = sum_sq(est.samples);
  for (size_t i = 0; i < ref.size(); ++i) dot += est.samples[i] * ref.samples[i];
  out.distortion_index = std::clamp(1.0 - (dot * dot) / (est_sq * ref_sq + kEps), 0.0, 1.0);

  out.intelligibility_proxy = stoi(ref, est);
  out.loudness_db = 20.0 * std::log10(rms(est.samples) + kEps);
  return out;
}

MetricReport metric_report(const Waveform& ref, const Waveform& est, int seg_frame) {
  MetricReport r;
  r.si_snr_db = si_snr(ref, est);
  r.stoi = stoi(ref, est);
  r.seg_snr_db = segmental_snr(ref, est, seg_frame);
  return r;
}

}  // namespace avse
