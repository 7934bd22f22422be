#pragma once

#include <complex>
#include <vector>

#include "avse/waveform.hpp"

namespace avse {

// Magnitude spectrogram, bins x frames (row-major: magnitudes[b*frames + t]).
struct StftFrame {
  std::vector<double> magnitudes;
  int bins = 0;
  int frames = 0;
  int window_len = 0;
  int hop = 0;

  double at(int b, int t) const { return magnitudes[size_t(b) * frames + t]; }
  double& at(int b, int t) { return magnitudes[size_t(b) * frames + t]; }
};

// In-place radix-2 FFT; size must be a power of two. inverse=true applies the
// conjugate transform and the 1/n factor.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

std::vector<double> hann_periodic(int n);

// Hann variant used by the intelligibility metric: 0.5*(1-cos(2*pi*(k+1)/(n+1))).
std::vector<double> hann_inner(int n);

// Hann-windowed magnitude STFT. fft_size (power of two, >= window_len) pads
// each frame with zeros; 0 means fft_size = window_len.
StftFrame stft(const Waveform& w, int window_len, int hop, int fft_size = 0);

// Windowed-sinc polyphase resampler; output length = round(len * target/source).
Waveform resample(const Waveform& w, int target_rate);

}  // namespace avse
