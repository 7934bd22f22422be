#pragma once

#include <string>

#include "avse/waveform.hpp"

namespace avse {

Waveform read_wav(const std::string& path);

// 16-bit PCM mono. Samples outside [-1, 1] are clipped; returns the clip count.
int write_wav(const std::string& path, const Waveform& w);

}  // namespace avse
