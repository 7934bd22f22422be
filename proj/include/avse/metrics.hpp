#pragma once

#include "avse/waveform.hpp"

namespace avse {

struct MetricReport {
  double si_snr_db = 0.0;
  double stoi = 0.0;
  double seg_snr_db = 0.0;
};

struct AcousticFeatures {
  // Residual energy after projecting est onto ref, in dB relative to the
  // projection (equals -si_snr, so it is scale-invariant).
  double residual_noise_db = 0.0;
  double distortion_index = 0.0;      // 1 - cos^2(est, ref), in [0, 1]
  double intelligibility_proxy = 0.0; // stoi(ref, est), in [0, 1]
  double loudness_db = 0.0;           // 20*log10(rms + eps)
  double improvement_db = 0.0;        // si_snr(ref, est) - si_snr(ref, noisy)
};

double si_snr(const Waveform& ref, const Waveform& est, double eps = kEps);

double stoi(const Waveform& ref, const Waveform& est);

double segmental_snr(const Waveform& ref, const Waveform& est, int frame);

AcousticFeatures acoustic_features(const Waveform& ref, const Waveform& est,
                                   const Waveform& noisy);

MetricReport metric_report(const Waveform& ref, const Waveform& est, int seg_frame = 256);

}  // namespace avse
