#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avse/waveform.hpp"

namespace avse {

// Low-rate feature stream standing in for lip video: row 0 tracks the clean
// speech envelope, remaining rows carry smoothed derivatives plus seeded
// jitter. Shape d_v x t_v, row-major.
struct VisualStream {
  std::vector<double> features;
  int d_v = 0;
  int t_v = 0;
  double frame_rate = 25.0;

  double at(int r, int c) const { return features[size_t(r) * t_v + c]; }
  double& at(int r, int c) { return features[size_t(r) * t_v + c]; }
};

struct Scene {
  Waveform clean;
  Waveform noise;   // already scaled to the target SNR
  Waveform noisy;   // clean + noise, after shared headroom scaling
  VisualStream visual;
  double snr_db = 0.0;
  uint64_t seed = 0;
  int id = 0;       // manifest scene id, assigned by the harness
};

enum class NoiseKind { White, Pink, Babble };

NoiseKind noise_kind_from_string(const std::string& s);
const char* noise_kind_name(NoiseKind k);

// Harmonic complex (f0 plus 4 harmonics, 1/k amplitude decay) gated by a slow
// random envelope with silent gaps; peak |amplitude| <= 0.9.
Waveform generate_clean(double duration_s, double f0_hz, uint64_t seed, int sample_rate);

// Unit-RMS noise. Babble overlaps 4 synthetic talkers with derived seeds.
Waveform generate_noise(NoiseKind kind, double duration_s, uint64_t seed, int sample_rate);

VisualStream visual_features(const Waveform& clean, double frame_rate, int d_v, uint64_t seed);

// Scales noise to hit snr_db exactly, then rescales the whole scene so
// max|noisy| <= 0.9 (the 16-bit WAV round trip must not clip).
Scene mix_scene(const Waveform& clean, const Waveform& noise, double snr_db, uint64_t seed,
                double visual_frame_rate = 25.0, int visual_d_v = 4);

}  // namespace avse
