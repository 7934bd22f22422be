#pragma once

// Hot inner loops of the enhancer, implemented twice:
//
//   kernels::serial: straightforward reference loops, kept for tests and
//                    the bench_kernels comparison target.
//   kernels::par:    OpenMP versions. Every parallel loop is over
//                    independent output elements and each element is
//                    reduced by a serial inner sum, so results do not
//                    depend on the thread count or schedule.
//
// The unqualified kernels::* entry points dispatch to par (which degrades
// to plain loops when OpenMP is disabled at build time).

namespace avse::kernels {

namespace serial {

// x[T] * w[N,kernel] + b[N] -> out[N,K], K = (T-kernel)/stride + 1.
void conv1d_fwd(const double* x, int T, const double* w, const double* b,
                int N, int kernel, int stride, int K, double* out);
void conv1d_bwd_x(const double* g, const double* w, int N, int kernel,
                  int stride, int K, int T, double* gx);
void conv1d_bwd_w(const double* g, const double* x, int N, int kernel,
                  int stride, int K, double* gw, double* gb);

// x[Cin,T] * w[Cout,Cin] + b[Cout] -> out[Cout,T]  (1x1 convolution).
void pointwise_fwd(const double* x, int Cin, int T, const double* w,
                   const double* b, int Cout, double* out);
void pointwise_bwd_x(const double* g, const double* w, int Cin, int T,
                     int Cout, double* gx);
void pointwise_bwd_w(const double* g, const double* x, int Cin, int T,
                     int Cout, double* gw, double* gb);

// Depthwise conv, zero-padded to the same length.
// x[C,T] * w[C,kernel] + b[C] -> out[C,T], taps at (j-(kernel-1)/2)*dilation.
void depthwise_fwd(const double* x, int C, int T, const double* w,
                   const double* b, int kernel, int dilation, double* out);
void depthwise_bwd_x(const double* g, const double* w, int C, int T,
                     int kernel, int dilation, double* gx);
void depthwise_bwd_w(const double* g, const double* x, int C, int T,
                     int kernel, int dilation, double* gw, double* gb);

// Transposed conv collapsing N channels to mono.
// x[N,K] * w[N,kernel] + b -> out[(K-1)*stride + kernel].
void tconv_fwd(const double* x, int N, int K, const double* w, double b,
               int kernel, int stride, double* out);
void tconv_bwd_x(const double* g, const double* w, int N, int K, int kernel,
                 int stride, double* gx);
void tconv_bwd_w(const double* g, const double* x, int N, int K, int kernel,
                 int stride, double* gw, double* gb);

}  // namespace serial

namespace par {

void conv1d_fwd(const double* x, int T, const double* w, const double* b,
                int N, int kernel, int stride, int K, double* out);
void conv1d_bwd_x(const double* g, const double* w, int N, int kernel,
                  int stride, int K, int T, double* gx);
void conv1d_bwd_w(const double* g, const double* x, int N, int kernel,
                  int stride, int K, double* gw, double* gb);

void pointwise_fwd(const double* x, int Cin, int T, const double* w,
                   const double* b, int Cout, double* out);
void pointwise_bwd_x(const double* g, const double* w, int Cin, int T,
                     int Cout, double* gx);
void pointwise_bwd_w(const double* g, const double* x, int Cin, int T,
                     int Cout, double* gw, double* gb);

void depthwise_fwd(const double* x, int C, int T, const double* w,
                   const double* b, int kernel, int dilation, double* out);
void depthwise_bwd_x(const double* g, const double* w, int C, int T,
                     int kernel, int dilation, double* gx);
void depthwise_bwd_w(const double* g, const double* x, int C, int T,
                     int kernel, int dilation, double* gw, double* gb);

void tconv_fwd(const double* x, int N, int K, const double* w, double b,
               int kernel, int stride, double* out);
void tconv_bwd_x(const double* g, const double* w, int N, int K, int kernel,
                 int stride, double* gx);
void tconv_bwd_w(const double* g, const double* x, int N, int K, int kernel,
                 int stride, double* gw, double* gb);

}  // namespace par

using namespace par;  // production dispatch

}  // namespace avse::kernels
