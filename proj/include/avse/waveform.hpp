#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "avse/common.hpp"

namespace avse {

// Mono sampled signal. Samples are dimensionless amplitudes, nominally in
// [-1, 1]; operations must keep them finite.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {
    require(rate > 0, ErrorCode::InvalidArgument, "sample_rate must be positive");
  }

  size_t size() const { return samples.size(); }
  double duration_s() const { return double(samples.size()) / sample_rate; }

  bool all_finite() const {
    for (double x : samples)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline double sum_sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::sqrt(sum_sq(v) / double(v.size()));
}

inline double peak_abs(const std::vector<double>& v) {
  double p = 0.0;
  for (double x : v) p = std::max(p, std::fabs(x));
  return p;
}

}  // namespace avse
