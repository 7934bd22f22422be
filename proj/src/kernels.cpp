#include "avse/kernels.hpp"

#include <cstring>

namespace avse::kernels {

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------

namespace serial {

void conv1d_fwd(const double* x, int /*T*/, const double* w, const double* b,
                int N, int kernel, int stride, int K, double* out) {
  for (int n = 0; n < N; ++n) {
    const double* wn = w + size_t(n) * kernel;
    for (int j = 0; j < K; ++j) {
      double acc = b[n];
      const double* xj = x + size_t(j) * stride;
      for (int q = 0; q < kernel; ++q) acc += wn[q] * xj[q];
      out[size_t(n) * K + j] = acc;
    }
  }
}

void conv1d_bwd_x(const double* g, const double* w, int N, int kernel,
                  int stride, int K, int T, double* gx) {
  std::memset(gx, 0, sizeof(double) * size_t(T));
  for (int n = 0; n < N; ++n) {
    const double* wn = w + size_t(n) * kernel;
    const double* gn = g + size_t(n) * K;
    for (int j = 0; j < K; ++j)
      for (int q = 0; q < kernel; ++q) gx[size_t(j) * stride + q] += gn[j] * wn[q];
  }
}

void conv1d_bwd_w(const double* g, const double* x, int N, int kernel,
                  int stride, int K, double* gw, double* gb) {
  for (int n = 0; n < N; ++n) {
    const double* gn = g + size_t(n) * K;
    for (int q = 0; q < kernel; ++q) {
      double acc = 0.0;
      for (int j = 0; j < K; ++j) acc += gn[j] * x[size_t(j) * stride + q];
      gw[size_t(n) * kernel + q] = acc;
    }
    double accb = 0.0;
    for (int j = 0; j < K; ++j) accb += gn[j];
    gb[n] = accb;
  }
}

void pointwise_fwd(const double* x, int Cin, int T, const double* w,
                   const double* b, int Cout, double* out) {
  for (int co = 0; co < Cout; ++co) {
    double* o = out + size_t(co) * T;
    for (int t = 0; t < T; ++t) o[t] = b[co];
    const double* wrow = w + size_t(co) * Cin;
    for (int ci = 0; ci < Cin; ++ci) {
      const double wv = wrow[ci];
      const double* xi = x + size_t(ci) * T;
      for (int t = 0; t < T; ++t) o[t] += wv * xi[t];
    }
  }
}

void pointwise_bwd_x(const double* g, const double* w, int Cin, int T,
                     int Cout, double* gx) {
  for (int ci = 0; ci < Cin; ++ci) {
    double* gxi = gx + size_t(ci) * T;
    for (int t = 0; t < T; ++t) gxi[t] = 0.0;
    for (int co = 0; co < Cout; ++co) {
      const double wv = w[size_t(co) * Cin + ci];
      const double* gco = g + size_t(co) * T;
      for (int t = 0; t < T; ++t) gxi[t] += wv * gco[t];
    }
  }
}

void pointwise_bwd_w(const double* g, const double* x, int Cin, int T,
                     int Cout, double* gw, double* gb) {
  for (int co = 0; co < Cout; ++co) {
    const double* gco = g + size_t(co) * T;
    for (int ci = 0; ci < Cin; ++ci) {
      const double* xi = x + size_t(ci) * T;
      double acc = 0.0;
      for (int t = 0; t < T; ++t) acc += gco[t] * xi[t];
      gw[size_t(co) * Cin + ci] = acc;
    }
    double accb = 0.0;
    for (int t = 0; t < T; ++t) accb += gco[t];
    gb[co] = accb;
  }
}

void depthwise_fwd(const double* x, int C, int T, const double* w,
                   const double* b, int kernel, int dilation, double* out) {
  const int half = (kernel - 1) / 2;
  for (int c = 0; c < C; ++c) {
    const double* xc = x + size_t(c) * T;
    const double* wc = w + size_t(c) * kernel;
    double* oc = out + size_t(c) * T;
    for (int t = 0; t < T; ++t) {
      double acc = b[c];
      for (int j = 0; j < kernel; ++j) {
        const int src = t + (j - half) * dilation;
        if (src >= 0 && src < T) acc += wc[j] * xc[src];
      }
      oc[t] = acc;
    }
  }
}

void depthwise_bwd_x(const double* g, const double* w, int C, int T,
                     int kernel, int dilation, double* gx) {
  const int half = (kernel - 1) / 2;
  for (int c = 0; c < C; ++c) {
    const double* gc = g + size_t(c) * T;
    const double* wc = w + size_t(c) * kernel;
    double* gxc = gx + size_t(c) * T;
    for (int t = 0; t < T; ++t) {
      double acc = 0.0;
      for (int j = 0; j < kernel; ++j) {
        const int dst = t - (j - half) * dilation;
        if (dst >= 0 && dst < T) acc += wc[j] * gc[dst];
      }
      gxc[t] = acc;
    }
  }
}

void depthwise_bwd_w(const double* g, const double* x, int C, int T,
                     int kernel, int dilation, double* gw, double* gb) {
  const int half = (kernel - 1) / 2;
  for (int c = 0; c < C; ++c) {
    const double* gc = g + size_t(c) * T;
    const double* xc = x + size_t(c) * T;
    for (int j = 0; j < kernel; ++j) {
      double acc = 0.0;
      const int off = (j - half) * dilation;
      for (int t = 0; t < T; ++t) {
        const int src = t + off;
        if (src >= 0 && src < T) acc += gc[t] * xc[src];
      }
      gw[size_t(c) * kernel + j] = acc;
    }
    double accb = 0.0;
    for (int t = 0; t < T; ++t) accb += gc[t];
    gb[c] = accb;
  }
}

void tconv_fwd(const double* x, int N, int K, const double* w, double b,
               int kernel, int stride, double* out) {
  const int L = (K - 1) * stride + kernel;
  // Gather form: each output sample sums its own (q, j) contributions, so
  // the summation order matches the parallel variant exactly.
  for (int t = 0; t < L; ++t) {
    double acc = b;
    for (int q = 0; q < kernel; ++q) {
      const int num = t - q;
      if (num < 0 || num % stride != 0) continue;
      const int j = num / stride;
      if (j >= K) continue;
      for (int n = 0; n < N; ++n) acc += x[size_t(n) * K + j] * w[size_t(n) * kernel + q];
    }
    out[t] = acc;
  }
}

void tconv_bwd_x(const double* g, const double* w, int N, int K, int kernel,
                 int stride, double* gx) {
  for (int n = 0; n < N; ++n) {
    const double* wn = w + size_t(n) * kernel;
    for (int j = 0; j < K; ++j) {
      double acc = 0.0;
      for (int q = 0; q < kernel; ++q) acc += g[size_t(j) * stride + q] * wn[q];
      gx[size_t(n) * K + j] = acc;
    }
  }
}

void tconv_bwd_w(const double* g, const double* x, int N, int K, int kernel,
                 int stride, double* gw, double* gb) {
  const int L = (K - 1) * stride + kernel;
  for (int n = 0; n < N; ++n) {
    const double* xn = x + size_t(n) * K;
    for (int q = 0; q < kernel; ++q) {
      double acc = 0.0;
      for (int j = 0; j < K; ++j) acc += xn[j] * g[size_t(j) * stride + q];
      gw[size_t(n) * kernel + q] = acc;
    }
  }
  double accb = 0.0;
  for (int t = 0; t < L; ++t) accb += g[t];
  *gb = accb;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP implementations. Outer loops run over independent output elements;
// inner sums stay serial so the result is identical for any thread count.
// ---------------------------------------------------------------------------

namespace par {

void conv1d_fwd(const double* x, int /*T*/, const double* w, const double* b,
                int N, int kernel, int stride, int K, double* out) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const double* wn = w + size_t(n) * kernel;
    for (int j = 0; j < K; ++j) {
      double acc = b[n];
      const double* xj = x + size_t(j) * stride;
      for (int q = 0; q < kernel; ++q) acc += wn[q] * xj[q];
      out[size_t(n) * K + j] = acc;
    }
  }
}

void conv1d_bwd_x(const double* g, const double* w, int N, int kernel,
                  int stride, int K, int T, double* gx) {
#pragma omp parallel for schedule(static)
  for (int t = 0; t < T; ++t) {
    double acc = 0.0;
    // positions (j, q) with j*stride + q == t
    const int qmax = kernel - 1 < t ? kernel - 1 : t;
    for (int q = t - (K - 1) * stride > 0 ? t - (K - 1) * stride : 0; q <= qmax; ++q) {
      const int num = t - q;
      if (num % stride != 0) continue;
      const int j = num / stride;
      if (j >= K) continue;
      for (int n = 0; n < N; ++n) acc += g[size_t(n) * K + j] * w[size_t(n) * kernel + q];
    }
    gx[t] = acc;
  }
}

void conv1d_bwd_w(const double* g, const double* x, int N, int kernel,
                  int stride, int K, double* gw, double* gb) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const double* gn = g + size_t(n) * K;
    for (int q = 0; q < kernel; ++q) {
      double acc = 0.0;
      for (int j = 0; j < K; ++j) acc += gn[j] * x[size_t(j) * stride + q];
      gw[size_t(n) * kernel + q] = acc;
    }
    double accb = 0.0;
    for (int j = 0; j < K; ++j) accb += gn[j];
    gb[n] = accb;
  }
}

void pointwise_fwd(const double* x, int Cin, int T, const double* w,
                   const double* b, int Cout, double* out) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Cout; ++co) {
    double* o = out + size_t(co) * T;
    for (int t = 0; t < T; ++t) o[t] = b[co];
    const double* wrow = w + size_t(co) * Cin;
    for (int ci = 0; ci < Cin; ++ci) {
      const double wv = wrow[ci];
      const double* xi = x + size_t(ci) * T;
      for (int t = 0; t < T; ++t) o[t] += wv * xi[t];
    }
  }
}

void pointwise_bwd_x(const double* g, const double* w, int Cin, int T,
                     int Cout, double* gx) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < Cin; ++ci) {
    double* gxi = gx + size_t(ci) * T;
    for (int t = 0; t < T; ++t) gxi[t] = 0.0;
    for (int co = 0; co < Cout; ++co) {
      const double wv = w[size_t(co) * Cin + ci];
      const double* gco = g + size_t(co) * T;
      for (int t = 0; t < T; ++t) gxi[t] += wv * gco[t];
    }
  }
}

void pointwise_bwd_w(const double* g, const double* x, int Cin, int T,
                     int Cout, double* gw, double* gb) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Cout; ++co) {
    const double* gco = g + size_t(co) * T;
    for (int ci = 0; ci < Cin; ++ci) {
      const double* xi = x + size_t(ci) * T;
      double acc = 0.0;
      for (int t = 0; t < T; ++t) acc += gco[t] * xi[t];
      gw[size_t(co) * Cin + ci] = acc;
    }
    double accb = 0.0;
    for (int t = 0; t < T; ++t) accb += gco[t];
    gb[co] = accb;
  }
}

void depthwise_fwd(const double* x, int C, int T, const double* w,
                   const double* b, int kernel, int dilation, double* out) {
  const int half = (kernel - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const double* xc = x + size_t(c) * T;
    const double* wc = w + size_t(c) * kernel;
    double* oc = out + size_t(c) * T;
    for (int t = 0; t < T; ++t) {
      double acc = b[c];
      for (int j = 0; j < kernel; ++j) {
        const int src = t + (j - half) * dilation;
        if (src >= 0 && src < T) acc += wc[j] * xc[src];
      }
      oc[t] = acc;
    }
  }
}

void depthwise_bwd_x(const double* g, const double* w, int C, int T,
                     int kernel, int dilation, double* gx) {
  const int half = (kernel - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const double* gc = g + size_t(c) * T;
    const double* wc = w + size_t(c) * kernel;
    double* gxc = gx + size_t(c) * T;
    for (int t = 0; t < T; ++t) {
      double acc = 0.0;
      for (int j = 0; j < kernel; ++j) {
        const int dst = t - (j - half) * dilation;
        if (dst >= 0 && dst < T) acc += wc[j] * gc[dst];
      }
      gxc[t] = acc;
    }
  }
}

void depthwise_bwd_w(const double* g, const double* x, int C, int T,
                     int kernel, int dilation, double* gw, double* gb) {
  const int half = (kernel - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const double* gc = g + size_t(c) * T;
    const double* xc = x + size_t(c) * T;
    for (int j = 0; j < kernel; ++j) {
      double acc = 0.0;
      const int off = (j - half) * dilation;
      for (int t = 0; t < T; ++t) {
        const int src = t + off;
        if (src >= 0 && src < T) acc += gc[t] * xc[src];
      }
      gw[size_t(c) * kernel + j] = acc;
    }
    double accb = 0.0;
    for (int t = 0; t < T; ++t) accb += gc[t];
    gb[c] = accb;
  }
}

void tconv_fwd(const double* x, int N, int K, const double* w, double b,
               int kernel, int stride, double* out) {
  const int L = (K - 1) * stride + kernel;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < L; ++t) {
    double acc = b;
    for (int q = 0; q < kernel; ++q) {
      const int num = t - q;
      if (num < 0 || num % stride != 0) continue;
      const int j = num / stride;
      if (j >= K) continue;
      for (int n = 0; n < N; ++n) acc += x[size_t(n) * K + j] * w[size_t(n) * kernel + q];
    }
    out[t] = acc;
  }
}

void tconv_bwd_x(const double* g, const double* w, int N, int K, int kernel,
                 int stride, double* gx) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const double* wn = w + size_t(n) * kernel;
    for (int j = 0; j < K; ++j) {
      double acc = 0.0;
      for (int q = 0; q < kernel; ++q) acc += g[size_t(j) * stride + q] * wn[q];
      gx[size_t(n) * K + j] = acc;
    }
  }
}

void tconv_bwd_w(const double* g, const double* x, int N, int K, int kernel,
                 int stride, double* gw, double* gb) {
  const int L = (K - 1) * stride + kernel;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const double* xn = x + size_t(n) * K;
    for (int q = 0; q < kernel; ++q) {
      double acc = 0.0;
      for (int j = 0; j < K; ++j) acc += xn[j] * g[size_t(j) * stride + q];
      gw[size_t(n) * kernel + q] = acc;
    }
  }
  double accb = 0.0;
  for (int t = 0; t < L; ++t) accb += g[t];
  *gb = accb;
}

}  // namespace par

}  // namespace avse::kernels
