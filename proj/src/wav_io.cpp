#include "avse/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace avse {

namespace {

uint32_t rd_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint16_t rd_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void wr_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(uint8_t(v));
  b.push_back(uint8_t(v >> 8));
  b.push_back(uint8_t(v >> 16));
  b.push_back(uint8_t(v >> 24));
}

void wr_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(uint8_t(v));
  b.push_back(uint8_t(v >> 8));
}

void wr_tag(std::vector<uint8_t>& b, const char* tag) {
  b.insert(b.end(), tag, tag + 4);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), ErrorCode::IoError, "cannot open " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  require(raw.size() >= 12, ErrorCode::FormatError, "truncated RIFF header");
  require(std::memcmp(raw.data(), "RIFF", 4) == 0 && std::memcmp(raw.data() + 8, "WAVE", 4) == 0,
          ErrorCode::FormatError, "not a RIFF/WAVE file");

  bool have_fmt = false;
  uint16_t channels = 0, bits = 0, audio_format = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const uint8_t* hdr = raw.data() + pos;
    const uint32_t csize = rd_u32(hdr + 4);
    const size_t body = pos + 8;
    require(body + csize <= raw.size(), ErrorCode::FormatError, "chunk overruns file");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      require(csize >= 16, ErrorCode::FormatError, "fmt chunk too short");
      audio_format = rd_u16(raw.data() + body);
      channels = rd_u16(raw.data() + body + 2);
      sample_rate = rd_u32(raw.data() + body + 4);
      bits = rd_u16(raw.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_off = body;
      data_len = csize;
      require(have_fmt, ErrorCode::FormatError, "data chunk before fmt chunk");
      break;
    }
    pos = body + csize + (csize & 1);
  }
  require(have_fmt && data_off > 0, ErrorCode::FormatError, "missing fmt or data chunk");
  require(audio_format == 1, ErrorCode::UnsupportedFormat, "only PCM encoding supported");
  require(bits == 16, ErrorCode::UnsupportedFormat, "only 16-bit samples supported");
  require(channels == 1, ErrorCode::UnsupportedFormat, "only mono supported");
  require(sample_rate > 0, ErrorCode::FormatError, "zero sample rate");
  require(data_len % 2 == 0, ErrorCode::FormatError, "odd data chunk size");

  Waveform w;
  w.sample_rate = int(sample_rate);
  w.samples.resize(data_len / 2);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const int16_t v = int16_t(rd_u16(raw.data() + data_off + 2 * i));
    w.samples[i] = double(v) / 32768.0;
  }
  return w;
}

int write_wav(const std::string& path, const Waveform& w) {
  const uint32_t data_bytes = uint32_t(w.size() * 2);
  std::vector<uint8_t> b;
  b.reserve(44 + data_bytes);
  wr_tag(b, "RIFF");
  wr_u32(b, 36 + data_bytes);
  wr_tag(b, "WAVE");
  wr_tag(b, "fmt ");
  wr_u32(b, 16);
  wr_u16(b, 1);
  wr_u16(b, 1);
  wr_u32(b, uint32_t(w.sample_rate));
  wr_u32(b, uint32_t(w.sample_rate) * 2);
  wr_u16(b, 2);
  wr_u16(b, 16);
  wr_tag(b, "data");
  wr_u32(b, data_bytes);

  int clipped = 0;
  for (double x : w.samples) {
    long q = std::lround(x * 32768.0);
    if (q < -32768L || q > 32767L) {
      q = std::clamp(q, -32768L, 32767L);
      ++clipped;
    }
    wr_u16(b, uint16_t(int16_t(q)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(bool(f), ErrorCode::IoError, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  require(bool(f), ErrorCode::IoError, "short write to " + path);
  return clipped;
}

}  // namespace avse
