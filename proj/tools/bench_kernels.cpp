// Compares the serial reference kernels against the OpenMP versions on
// enhancer-sized workloads, checking agreement before timing.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "avse/common.hpp"
#include "avse/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_vec(size_t n, avse::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.gaussian();
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double par_ms, double diff) {
  std::printf("%-16s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   max|diff| %.3e\n",
              name, serial_ms, par_ms, serial_ms / par_ms, diff);
}

}  // namespace

int main() {
  constexpr int kT = 64000;  // 4 s at 16 kHz
  constexpr int kN = 64;
  constexpr int kKernel = 16;
  constexpr int kStride = 8;
  constexpr int kC = 64;
  constexpr int kReps = 20;
  const int kK = (kT - kKernel) / kStride + 1;

  avse::Rng rng(42);
  const std::vector<double> x = random_vec(kT, rng);
  const std::vector<double> w = random_vec(size_t(kN) * kKernel, rng);
  const std::vector<double> b = random_vec(kN, rng);
  const std::vector<double> latent = random_vec(size_t(kN) * kK, rng);
  const std::vector<double> grid = random_vec(size_t(kC) * kK, rng);
  const std::vector<double> pw_w = random_vec(size_t(kC) * kC, rng);
  const std::vector<double> pw_b = random_vec(kC, rng);
  const std::vector<double> dw_w = random_vec(size_t(kC) * 3, rng);
  const std::vector<double> g_latent = random_vec(size_t(kN) * kK, rng);
  const std::vector<double> g_grid = random_vec(size_t(kC) * kK, rng);

#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled at build time; both columns run the same loops.\n");
#endif
  std::printf("workload: T=%d, N=%d, kernel=%d, stride=%d, K=%d, C=%d, reps=%d\n\n",
              kT, kN, kKernel, kStride, kK, kC, kReps);

  namespace ks = avse::kernels::serial;
  namespace kp = avse::kernels::par;

  {
    std::vector<double> o1(size_t(kN) * kK), o2(o1.size());
    ks::conv1d_fwd(x.data(), kT, w.data(), b.data(), kN, kKernel, kStride, kK, o1.data());
    kp::conv1d_fwd(x.data(), kT, w.data(), b.data(), kN, kKernel, kStride, kK, o2.data());
    const double diff = max_abs_diff(o1, o2);
    const double ts = time_ms([&] {
      ks::conv1d_fwd(x.data(), kT, w.data(), b.data(), kN, kKernel, kStride, kK, o1.data());
    }, kReps);
    const double tp = time_ms([&] {
      kp::conv1d_fwd(x.data(), kT, w.data(), b.data(), kN, kKernel, kStride, kK, o2.data());
    }, kReps);
    report("conv1d_fwd", ts, tp, diff);
  }
  {
    std::vector<double> o1(kT), o2(kT);
    ks::conv1d_bwd_x(g_latent.data(), w.data(), kN, kKernel, kStride, kK, kT, o1.data());
    kp::conv1d_bwd_x(g_latent.data(), w.data(), kN, kKernel, kStride, kK, kT, o2.data());
    const double diff = max_abs_diff(o1, o2);
    const double ts = time_ms([&] {
      ks::conv1d_bwd_x(g_latent.data(), w.data(), kN, kKernel, kStride, kK, kT, o1.data());
    }, kReps);
    const double tp = time_ms([&] {
      kp::conv1d_bwd_x(g_latent.data(), w.data(), kN, kKernel, kStride, kK, kT, o2.data());
    }, kReps);
    report("conv1d_bwd_x", ts, tp, diff);
  }
  {
    std::vector<double> w1(size_t(kN) * kKernel), b1(kN), w2(w1.size()), b2(kN);
    ks::conv1d_bwd_w(g_latent.data(), x.data(), kN, kKernel, kStride, kK, w1.data(), b1.data());
    kp::conv1d_bwd_w(g_latent.data(), x.data(), kN, kKernel, kStride, kK, w2.data(), b2.data());
    const double diff = std::max(max_abs_diff(w1, w2), max_abs_diff(b1, b2));
    const double ts = time_ms([&] {
      ks::conv1d_bwd_w(g_latent.data(), x.data(), kN, kKernel, kStride, kK, w1.data(), b1.data());
    }, kReps);
    const double tp = time_ms([&] {
      kp::conv1d_bwd_w(g_latent.data(), x.data(), kN, kKernel, kStride, kK, w2.data(), b2.data());
    }, kReps);
    report("conv1d_bwd_w", ts, tp, diff);
  }
  {
    std::vector<double> o1(size_t(kC) * kK), o2(o1.size());
    ks::pointwise_fwd(grid.data(), kC, kK, pw_w.data(), pw_b.data(), kC, o1.data());
    kp::pointwise_fwd(grid.data(), kC, kK, pw_w.data(), pw_b.data(), kC, o2.data());
    const double diff = max_abs_diff(o1, o2);
    const double ts = time_ms([&] {
      ks::pointwise_fwd(grid.data(), kC, kK, pw_w.data(), pw_b.data(), kC, o1.data());
    }, kReps);
    const double tp = time_ms([&] {
      kp::pointwise_fwd(grid.data(), kC, kK, pw_w.data(), pw_b.data(), kC, o2.data());
    }, kReps);
    report("pointwise_fwd", ts, tp, diff);
  }
  {
    std::vector<double> o1(size_t(kC) * kK), o2(o1.size());
    ks::depthwise_fwd(grid.data(), kC, kK, dw_w.data(), pw_b.data(), 3, 4, o1.data());
    kp::depthwise_fwd(grid.data(), kC, kK, dw_w.data(), pw_b.data(), 3, 4, o2.data());
    const double diff = max_abs_diff(o1, o2);
    const double ts = time_ms([&] {
      ks::depthwise_fwd(grid.data(), kC, kK, dw_w.data(), pw_b.data(), 3, 4, o1.data());
    }, kReps);
    const double tp = time_ms([&] {
      kp::depthwise_fwd(grid.data(), kC, kK, dw_w.data(), pw_b.data(), 3, 4, o2.data());
    }, kReps);
    report("depthwise_fwd", ts, tp, diff);
  }
  {
    const int out_len = (kK - 1) * kStride + kKernel;
    std::vector<double> o1(out_len), o2(out_len);
    ks::tconv_fwd(latent.data(), kN, kK, w.data(), 0.1, kKernel, kStride, o1.data());
    kp::tconv_fwd(latent.data(), kN, kK, w.data(), 0.1, kKernel, kStride, o2.data());
    const double diff = max_abs_diff(o1, o2);
    const double ts = time_ms([&] {
      ks::tconv_fwd(latent.data(), kN, kK, w.data(), 0.1, kKernel, kStride, o1.data());
    }, kReps);
    const double tp = time_ms([&] {
      kp::tconv_fwd(latent.data(), kN, kK, w.data(), 0.1, kKernel, kStride, o2.data());
    }, kReps);
    report("tconv_fwd", ts, tp, diff);
  }
  return 0;
}
