#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace avse {

// Single guard constant for every eps-protected log or division.
inline constexpr double kEps = 1e-8;

enum class ErrorCode {
  InvalidArgument,
  DegenerateSignal,
  FormatError,
  UnsupportedFormat,
  InsufficientSignal,
  RewardModelMismatch,
  IoError,
  NumericalFailure,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:     return "invalid-argument";
    case ErrorCode::DegenerateSignal:    return "degenerate-signal";
    case ErrorCode::FormatError:         return "format-error";
    case ErrorCode::UnsupportedFormat:   return "unsupported-format";
    case ErrorCode::InsufficientSignal:  return "insufficient-signal";
    case ErrorCode::RewardModelMismatch: return "reward-model-mismatch";
    case ErrorCode::IoError:             return "io-error";
    case ErrorCode::NumericalFailure:    return "numerical-failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

// ---------------------------------------------------------------------------
// Seeding and random numbers.
//
// All stochastic choices in the project derive from explicit 64-bit seeds so
// any artifact (a scene, an epoch's actions, a weight init) is regenerable in
// isolation. The generator and distributions are hand-rolled because the
// standard library's distribution objects are implementation-defined and
// would break bit-reproducibility across toolchains.
// ---------------------------------------------------------------------------

inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Hierarchical seed derivation: master -> stream -> index.
inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t index = 0) {
  uint64_t z = mix64(master + 0x9E3779B97F4A7C15ull * (stream + 1));
  return mix64(z + 0x9E3779B97F4A7C15ull * (index + 1));
}

// Stream tags for derive_seed.
namespace seed_stream {
inline constexpr uint64_t kScene = 1;
inline constexpr uint64_t kWeights = 2;
inline constexpr uint64_t kPretrain = 3;
inline constexpr uint64_t kAction = 4;
inline constexpr uint64_t kBabble = 5;
inline constexpr uint64_t kVisual = 6;
inline constexpr uint64_t kNoise = 7;
inline constexpr uint64_t kClean = 8;
}  // namespace seed_stream

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    // splitmix64; fully specified, no libc dependence.
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one variate per call, the sine branch is discarded so the
  // stream position is a pure function of the call count.
  double gaussian() {
    double u1 = (double(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = double(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace avse
