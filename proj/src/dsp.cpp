#include "avse/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace avse {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  require(is_pow2(int(n)), ErrorCode::InvalidArgument, "fft size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= double(n);
  }
}

std::vector<double> hann_periodic(int n) {
  require(n > 0, ErrorCode::InvalidArgument, "window length must be positive");
  std::vector<double> w(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    w[size_t(k)] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * k / double(n)));
  return w;
}

std::vector<double> hann_inner(int n) {
  require(n > 0, ErrorCode::InvalidArgument, "window length must be positive");
  std::vector<double> w(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    w[size_t(k)] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (k + 1) / double(n + 1)));
  return w;
}

StftFrame stft(const Waveform& w, int window_len, int hop, int fft_size) {
  require(hop > 0 && window_len >= hop, ErrorCode::InvalidArgument,
          "need 0 < hop <= window_len");
  require(int(w.size()) >= window_len, ErrorCode::InsufficientSignal,
          "signal shorter than one window");
  if (fft_size == 0) fft_size = window_len;
  require(fft_size >= window_len && is_pow2(fft_size), ErrorCode::InvalidArgument,
          "fft_size must be a power of two >= window_len");

  const int frames = int((w.size() - size_t(window_len)) / size_t(hop)) + 1;
  const int bins = fft_size / 2 + 1;
  const std::vector<double> win = hann_periodic(window_len);

  StftFrame out;
  out.bins = bins;
  out.frames = frames;
  out.window_len = window_len;
  out.hop = hop;
  out.magnitudes.assign(size_t(bins) * frames, 0.0);

  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_size));
  for (int t = 0; t < frames; ++t) {
    const size_t base = size_t(t) * hop;
    for (int k = 0; k < window_len; ++k)
      buf[size_t(k)] = w.samples[base + size_t(k)] * win[size_t(k)];
    std::fill(buf.begin() + window_len, buf.end(), std::complex<double>(0.0, 0.0));
    fft_inplace(buf, false);
    for (int b = 0; b < bins; ++b) out.at(b, t) = std::abs(buf[size_t(b)]);
  }
  return out;
}

Waveform resample(const Waveform& w, int target_rate) {
  require(target_rate > 0, ErrorCode::InvalidArgument, "target_rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const int g = std::gcd(target_rate, w.sample_rate);
  const long long up = target_rate / g;
  const long long down = w.sample_rate / g;
  const double ratio = double(target_rate) / double(w.sample_rate);
  const size_t out_len = size_t(std::llround(double(w.size()) * ratio));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(out_len, 0.0);
  if (w.size() == 0) return out;

  // Anti-aliasing cutoff relative to the input Nyquist; 10 sinc lobes per side.
  const double fc = std::min(1.0, ratio);
  const int lobes = 10;
  const double radius = double(lobes) / fc;
  const int reach = int(std::ceil(radius));

  // One tap set per fractional phase p/up, normalized to unit DC gain.
  std::vector<std::vector<double>> taps(static_cast<size_t>(up));
  for (long long p = 0; p < up; ++p) {
    const double frac = double(p) / double(up);
    std::vector<double> h(static_cast<size_t>(2 * reach + 1));
    double s = 0.0;
    for (int j = -reach; j <= reach; ++j) {
      const double tau = frac - double(j);
      double v = 0.0;
      if (std::fabs(tau) <= radius) {
        const double sx = std::numbers::pi * fc * tau;
        const double sinc = (std::fabs(sx) < 1e-12) ? 1.0 : std::sin(sx) / sx;
        const double win = 0.5 * (1.0 + std::cos(std::numbers::pi * tau / radius));
        v = fc * sinc * win;
      }
      h[size_t(j + reach)] = v;
      s += v;
    }
    for (double& v : h) v /= s;
    taps[size_t(p)] = std::move(h);
  }

  const long long n = (long long)w.size();
  for (size_t m = 0; m < out_len; ++m) {
    const long long num = (long long)m * down;
    const long long n0 = num / up;
    const std::vector<double>& h = taps[size_t(num % up)];
    double acc = 0.0;
    for (int j = -reach; j <= reach; ++j) {
      const long long i = n0 + j;
      if (i >= 0 && i < n) acc += h[size_t(j + reach)] * w.samples[size_t(i)];
    }
    out.samples[m] = acc;
  }
  return out;
}

}  // namespace avse
