#include "avse/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "avse/common.hpp"
#include "avse/kernels.hpp"

namespace avse {

const Tape::Node& Tape::node(DiffTensor h) const {
  require(h.id >= 0 && size_t(h.id) < nodes_.size(), ErrorCode::InvalidArgument,
          "stale tensor handle");
  return nodes_[size_t(h.id)];
}

Tape::Node& Tape::node(DiffTensor h) {
  require(h.id >= 0 && size_t(h.id) < nodes_.size(), ErrorCode::InvalidArgument,
          "stale tensor handle");
  return nodes_[size_t(h.id)];
}

DiffTensor Tape::push(Tensor val, bool rg, std::function<void(Tape&, int)> back) {
  Node n;
  n.grad = Tensor::zeros_like(val);
  n.val = std::move(val);
  n.rg = rg;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return DiffTensor{int(nodes_.size()) - 1};
}

DiffTensor Tape::leaf(const Tensor& t, bool requires_grad) {
  return push(t, requires_grad, nullptr);
}

double Tape::scalar(DiffTensor h) const {
  check_scalar(h);
  return node(h).val.v[0];
}

void Tape::check_scalar(DiffTensor h) const {
  require(node(h).val.v.size() == 1, ErrorCode::InvalidArgument,
          "expected a scalar node");
}

void Tape::backward(DiffTensor root) {
  check_scalar(root);
  node(root).grad.v[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[size_t(i)];
    if (n.rg && n.back) n.back(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops.
// ---------------------------------------------------------------------------

DiffTensor Tape::add(DiffTensor a, DiffTensor b) {
  require(node(a).val.same_shape(node(b).val), ErrorCode::InvalidArgument,
          "add: shape mismatch");
  Tensor out = node(a).val;
  const Tensor& bv = node(b).val;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    if (t.node(a).rg)
      for (size_t i = 0; i < g.v.size(); ++i) t.node(a).grad.v[i] += g.v[i];
    if (t.node(b).rg)
      for (size_t i = 0; i < g.v.size(); ++i) t.node(b).grad.v[i] += g.v[i];
  });
}

DiffTensor Tape::sub(DiffTensor a, DiffTensor b) {
  require(node(a).val.same_shape(node(b).val), ErrorCode::InvalidArgument,
          "sub: shape mismatch");
  Tensor out = node(a).val;
  const Tensor& bv = node(b).val;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv.v[i];
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    if (t.node(a).rg)
      for (size_t i = 0; i < g.v.size(); ++i) t.node(a).grad.v[i] += g.v[i];
    if (t.node(b).rg)
      for (size_t i = 0; i < g.v.size(); ++i) t.node(b).grad.v[i] -= g.v[i];
  });
}

DiffTensor Tape::mul(DiffTensor a, DiffTensor b) {
  require(node(a).val.same_shape(node(b).val), ErrorCode::InvalidArgument,
          "mul: shape mismatch");
  Tensor out = node(a).val;
  const Tensor& bv = node(b).val;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    if (t.node(a).rg) {
      const Tensor& bval = t.node(b).val;
      for (size_t i = 0; i < g.v.size(); ++i) t.node(a).grad.v[i] += g.v[i] * bval.v[i];
    }
    if (t.node(b).rg) {
      const Tensor& aval = t.node(a).val;
      for (size_t i = 0; i < g.v.size(); ++i) t.node(b).grad.v[i] += g.v[i] * aval.v[i];
    }
  });
}

DiffTensor Tape::relu(DiffTensor x) {
  Tensor out = node(x).val;
  for (double& v : out.v) v = std::max(v, 0.0);
  return push(std::move(out), node(x).rg, [x](Tape& t, int self) {
    if (!t.node(x).rg) return;
    const Tensor& g = t.nodes_[size_t(self)].grad;
    const Tensor& xv = t.node(x).val;
    for (size_t i = 0; i < g.v.size(); ++i)
      if (xv.v[i] > 0.0) t.node(x).grad.v[i] += g.v[i];
  });
}

DiffTensor Tape::sigmoid(DiffTensor x) {
  Tensor out = node(x).val;
  for (double& v : out.v) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(out), node(x).rg, [x](Tape& t, int self) {
    if (!t.node(x).rg) return;
    const Tensor& g = t.nodes_[size_t(self)].grad;
    const Tensor& y = t.nodes_[size_t(self)].val;
    for (size_t i = 0; i < g.v.size(); ++i)
      t.node(x).grad.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
  });
}

DiffTensor Tape::prelu(DiffTensor x, DiffTensor alpha) {
  require(node(alpha).val.v.size() == 1, ErrorCode::InvalidArgument,
          "prelu: alpha must be a scalar");
  const double a = node(alpha).val.v[0];
  Tensor out = node(x).val;
  for (double& v : out.v) v = v > 0.0 ? v : a * v;
  const bool rg = node(x).rg || node(alpha).rg;
  return push(std::move(out), rg, [x, alpha](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    const Tensor& xv = t.node(x).val;
    const double av = t.node(alpha).val.v[0];
    if (t.node(x).rg) {
      for (size_t i = 0; i < g.v.size(); ++i)
        t.node(x).grad.v[i] += g.v[i] * (xv.v[i] > 0.0 ? 1.0 : av);
    }
    if (t.node(alpha).rg) {
      double acc = 0.0;
      for (size_t i = 0; i < g.v.size(); ++i)
        if (xv.v[i] <= 0.0) acc += g.v[i] * xv.v[i];
      t.node(alpha).grad.v[0] += acc;
    }
  });
}

DiffTensor Tape::concat_rows(DiffTensor a, DiffTensor b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  require(av.shape.size() == 2 && bv.shape.size() == 2 && av.shape[1] == bv.shape[1],
          ErrorCode::InvalidArgument, "concat_rows: need matrices with equal columns");
  Tensor out({av.shape[0] + bv.shape[0], av.shape[1]});
  std::copy(av.v.begin(), av.v.end(), out.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + long(av.v.size()));
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    const size_t na = t.node(a).val.v.size();
    if (t.node(a).rg)
      for (size_t i = 0; i < na; ++i) t.node(a).grad.v[i] += g.v[i];
    if (t.node(b).rg) {
      Tensor& gb = t.node(b).grad;
      for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += g.v[na + i];
    }
  });
}

DiffTensor Tape::interp_time(DiffTensor x, int t_out) {
  const Tensor& xv = node(x).val;
  require(xv.shape.size() == 2, ErrorCode::InvalidArgument, "interp_time: need a matrix");
  require(t_out >= 1, ErrorCode::InvalidArgument, "interp_time: t_out must be positive");
  const int rows = xv.shape[0];
  const int t_in = xv.shape[1];

  std::vector<int> i0(static_cast<size_t>(t_out));
  std::vector<double> frac(static_cast<size_t>(t_out));
  for (int t = 0; t < t_out; ++t) {
    if (t_in == 1 || t_out == 1) {
      i0[size_t(t)] = 0;
      frac[size_t(t)] = 0.0;
    } else {
      const double src = double(t) * double(t_in - 1) / double(t_out - 1);
      int lo = int(std::floor(src));
      lo = std::min(lo, t_in - 2);
      i0[size_t(t)] = lo;
      frac[size_t(t)] = src - lo;
    }
  }

  Tensor out({rows, t_out});
  for (int r = 0; r < rows; ++r)
    for (int t = 0; t < t_out; ++t) {
      const int lo = i0[size_t(t)];
      const double f = frac[size_t(t)];
      const double lo_v = xv.at(r, lo);
      const double hi_v = (t_in > 1) ? xv.at(r, lo + 1) : lo_v;
      out.at(r, t) = (1.0 - f) * lo_v + f * hi_v;
    }

  return push(std::move(out), node(x).rg,
              [x, i0 = std::move(i0), frac = std::move(frac), rows, t_in, t_out](
                  Tape& t, int self) {
                if (!t.node(x).rg) return;
                const Tensor& g = t.nodes_[size_t(self)].grad;
                Tensor& gx = t.node(x).grad;
                for (int r = 0; r < rows; ++r)
                  for (int c = 0; c < t_out; ++c) {
                    const int lo = i0[size_t(c)];
                    const double f = frac[size_t(c)];
                    const double gv = g.v[size_t(r) * t_out + c];
                    gx.v[size_t(r) * t_in + lo] += (1.0 - f) * gv;
                    if (t_in > 1) gx.v[size_t(r) * t_in + lo + 1] += f * gv;
                  }
              });
}

DiffTensor Tape::fit_length(DiffTensor x, int out_len) {
  const Tensor& xv = node(x).val;
  require(xv.shape.size() == 1, ErrorCode::InvalidArgument, "fit_length: need a vector");
  require(out_len >= 0, ErrorCode::InvalidArgument, "fit_length: negative length");
  const int in_len = xv.shape[0];
  const int copy = std::min(in_len, out_len);
  Tensor out({out_len});
  std::copy(xv.v.begin(), xv.v.begin() + copy, out.v.begin());
  return push(std::move(out), node(x).rg, [x, copy](Tape& t, int self) {
    if (!t.node(x).rg) return;
    const Tensor& g = t.nodes_[size_t(self)].grad;
    Tensor& gx = t.node(x).grad;
    for (int i = 0; i < copy; ++i) gx.v[size_t(i)] += g.v[size_t(i)];
  });
}

DiffTensor Tape::add_const(DiffTensor x, const Tensor& c) {
  require(node(x).val.same_shape(c), ErrorCode::InvalidArgument, "add_const: shape mismatch");
  Tensor out = node(x).val;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
  return push(std::move(out), node(x).rg, [x](Tape& t, int self) {
    if (!t.node(x).rg) return;
    const Tensor& g = t.nodes_[size_t(self)].grad;
    for (size_t i = 0; i < g.v.size(); ++i) t.node(x).grad.v[i] += g.v[i];
  });
}

DiffTensor Tape::sub_const(DiffTensor x, const Tensor& c) {
  require(node(x).val.same_shape(c), ErrorCode::InvalidArgument, "sub_const: shape mismatch");
  Tensor out = node(x).val;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= c.v[i];
  return push(std::move(out), node(x).rg, [x](Tape& t, int self) {
    if (!t.node(x).rg) return;
    const Tensor& g = t.nodes_[size_t(self)].grad;
    for (size_t i = 0; i < g.v.size(); ++i) t.node(x).grad.v[i] += g.v[i];
  });
}

DiffTensor Tape::scale_const_vec(DiffTensor s, const Tensor& c) {
  check_scalar(s);
  Tensor out = c;
  const double sv = node(s).val.v[0];
  for (double& v : out.v) v *= sv;
  return push(std::move(out), node(s).rg, [s, c](Tape& t, int self) {
    if (!t.node(s).rg) return;
    const Tensor& g = t.nodes_[size_t(self)].grad;
    double acc = 0.0;
    for (size_t i = 0; i < g.v.size(); ++i) acc += g.v[i] * c.v[i];
    t.node(s).grad.v[0] += acc;
  });
}

// ---------------------------------------------------------------------------
// Convolution ops.
// ---------------------------------------------------------------------------

DiffTensor Tape::conv1d(DiffTensor x, DiffTensor w, DiffTensor b, int stride) {
  const Tensor& xv = node(x).val;
  const Tensor& wv = node(w).val;
  const Tensor& bv = node(b).val;
  require(xv.shape.size() == 1 && wv.shape.size() == 2 && bv.shape.size() == 1,
          ErrorCode::InvalidArgument, "conv1d: bad ranks");
  const int T = xv.shape[0];
  const int N = wv.shape[0];
  const int kernel = wv.shape[1];
  require(bv.shape[0] == N, ErrorCode::InvalidArgument, "conv1d: bias size mismatch");
  require(stride > 0 && T >= kernel, ErrorCode::InvalidArgument,
          "conv1d: input shorter than kernel");
  const int K = (T - kernel) / stride + 1;

  Tensor out({N, K});
  kernels::conv1d_fwd(xv.v.data(), T, wv.v.data(), bv.v.data(), N, kernel, stride, K,
                      out.v.data());
  const bool rg = node(x).rg || node(w).rg || node(b).rg;
  return push(std::move(out), rg, [x, w, b, T, N, kernel, stride, K](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    if (t.node(x).rg) {
      Tensor gx({T});
      kernels::conv1d_bwd_x(g.v.data(), t.node(w).val.v.data(), N, kernel, stride, K,
                            T, gx.v.data());
      Tensor& dst = t.node(x).grad;
      for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gx.v[i];
    }
    if (t.node(w).rg || t.node(b).rg) {
      Tensor gw({N, kernel});
      Tensor gb({N});
      kernels::conv1d_bwd_w(g.v.data(), t.node(x).val.v.data(), N, kernel, stride, K,
                            gw.v.data(), gb.v.data());
      if (t.node(w).rg) {
        Tensor& dst = t.node(w).grad;
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gw.v[i];
      }
      if (t.node(b).rg) {
        Tensor& dst = t.node(b).grad;
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gb.v[i];
      }
    }
  });
}

DiffTensor Tape::pointwise(DiffTensor x, DiffTensor w, DiffTensor b) {
  const Tensor& xv = node(x).val;
  const Tensor& wv = node(w).val;
  const Tensor& bv = node(b).val;
  require(xv.shape.size() == 2 && wv.shape.size() == 2 && bv.shape.size() == 1,
          ErrorCode::InvalidArgument, "pointwise: bad ranks");
  const int Cin = xv.shape[0];
  const int T = xv.shape[1];
  const int Cout = wv.shape[0];
  require(wv.shape[1] == Cin && bv.shape[0] == Cout, ErrorCode::InvalidArgument,
          "pointwise: shape mismatch");

  Tensor out({Cout, T});
  kernels::pointwise_fwd(xv.v.data(), Cin, T, wv.v.data(), bv.v.data(), Cout, out.v.data());
  const bool rg = node(x).rg || node(w).rg || node(b).rg;
  return push(std::move(out), rg, [x, w, b, Cin, T, Cout](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    if (t.node(x).rg) {
      Tensor gx({Cin, T});
      kernels::pointwise_bwd_x(g.v.data(), t.node(w).val.v.data(), Cin, T, Cout,
                               gx.v.data());
      Tensor& dst = t.node(x).grad;
      for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gx.v[i];
    }
    if (t.node(w).rg || t.node(b).rg) {
      Tensor gw({Cout, Cin});
      Tensor gb({Cout});
      kernels::pointwise_bwd_w(g.v.data(), t.node(x).val.v.data(), Cin, T, Cout,
                               gw.v.data(), gb.v.data());
      if (t.node(w).rg) {
        Tensor& dst = t.node(w).grad;
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gw.v[i];
      }
      if (t.node(b).rg) {
        Tensor& dst = t.node(b).grad;
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gb.v[i];
      }
    }
  });
}

DiffTensor Tape::depthwise(DiffTensor x, DiffTensor w, DiffTensor b, int dilation) {
  const Tensor& xv = node(x).val;
  const Tensor& wv = node(w).val;
  const Tensor& bv = node(b).val;
  require(xv.shape.size() == 2 && wv.shape.size() == 2 && bv.shape.size() == 1,
          ErrorCode::InvalidArgument, "depthwise: bad ranks");
  const int C = xv.shape[0];
  const int T = xv.shape[1];
  const int kernel = wv.shape[1];
  require(wv.shape[0] == C && bv.shape[0] == C, ErrorCode::InvalidArgument,
          "depthwise: shape mismatch");
  require(dilation > 0, ErrorCode::InvalidArgument, "depthwise: dilation must be positive");

  Tensor out({C, T});
  kernels::depthwise_fwd(xv.v.data(), C, T, wv.v.data(), bv.v.data(), kernel, dilation,
                         out.v.data());
  const bool rg = node(x).rg || node(w).rg || node(b).rg;
  return push(std::move(out), rg, [x, w, b, C, T, kernel, dilation](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    if (t.node(x).rg) {
      Tensor gx({C, T});
      kernels::depthwise_bwd_x(g.v.data(), t.node(w).val.v.data(), C, T, kernel, dilation,
                               gx.v.data());
      Tensor& dst = t.node(x).grad;
      for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gx.v[i];
    }
    if (t.node(w).rg || t.node(b).rg) {
      Tensor gw({C, kernel});
      Tensor gb({C});
      kernels::depthwise_bwd_w(g.v.data(), t.node(x).val.v.data(), C, T, kernel, dilation,
                               gw.v.data(), gb.v.data());
      if (t.node(w).rg) {
        Tensor& dst = t.node(w).grad;
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gw.v[i];
      }
      if (t.node(b).rg) {
        Tensor& dst = t.node(b).grad;
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gb.v[i];
      }
    }
  });
}

DiffTensor Tape::tconv(DiffTensor x, DiffTensor w, DiffTensor b, int stride) {
  const Tensor& xv = node(x).val;
  const Tensor& wv = node(w).val;
  const Tensor& bv = node(b).val;
  require(xv.shape.size() == 2 && wv.shape.size() == 2 && bv.v.size() == 1,
          ErrorCode::InvalidArgument, "tconv: bad ranks");
  const int N = xv.shape[0];
  const int K = xv.shape[1];
  const int kernel = wv.shape[1];
  require(wv.shape[0] == N, ErrorCode::InvalidArgument, "tconv: shape mismatch");
  require(stride > 0 && stride <= kernel, ErrorCode::InvalidArgument,
          "tconv: need 0 < stride <= kernel");
  const int out_len = (K - 1) * stride + kernel;

  Tensor out({out_len});
  kernels::tconv_fwd(xv.v.data(), N, K, wv.v.data(), bv.v[0], kernel, stride, out.v.data());
  const bool rg = node(x).rg || node(w).rg || node(b).rg;
  return push(std::move(out), rg, [x, w, b, N, K, kernel, stride](Tape& t, int self) {
    const Tensor& g = t.nodes_[size_t(self)].grad;
    if (t.node(x).rg) {
      Tensor gx({N, K});
      kernels::tconv_bwd_x(g.v.data(), t.node(w).val.v.data(), N, K, kernel, stride,
                           gx.v.data());
      Tensor& dst = t.node(x).grad;
      for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gx.v[i];
    }
    if (t.node(w).rg || t.node(b).rg) {
      Tensor gw({N, kernel});
      double gb = 0.0;
      kernels::tconv_bwd_w(g.v.data(), t.node(x).val.v.data(), N, K, kernel, stride,
                           gw.v.data(), &gb);
      if (t.node(w).rg) {
        Tensor& dst = t.node(w).grad;
        for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += gw.v[i];
      }
      if (t.node(b).rg) t.node(b).grad.v[0] += gb;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and scalar arithmetic.
// ---------------------------------------------------------------------------

DiffTensor Tape::dot(DiffTensor a, DiffTensor b) {
  require(node(a).val.same_shape(node(b).val), ErrorCode::InvalidArgument,
          "dot: shape mismatch");
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  double acc = 0.0;
  for (size_t i = 0; i < av.v.size(); ++i) acc += av.v[i] * bv.v[i];
  Tensor out({1});
  out.v[0] = acc;
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const double g = t.nodes_[size_t(self)].grad.v[0];
    if (t.node(a).rg) {
      const Tensor& bval = t.node(b).val;
      Tensor& ga = t.node(a).grad;
      for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g * bval.v[i];
    }
    if (t.node(b).rg) {
      const Tensor& aval = t.node(a).val;
      Tensor& gb = t.node(b).grad;
      for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += g * aval.v[i];
    }
  });
}

DiffTensor Tape::sum(DiffTensor a) {
  const Tensor& av = node(a).val;
  Tensor out({1});
  out.v[0] = 0.0;
  for (double v : av.v) out.v[0] += v;
  return push(std::move(out), node(a).rg, [a](Tape& t, int self) {
    if (!t.node(a).rg) return;
    const double g = t.nodes_[size_t(self)].grad.v[0];
    Tensor& ga = t.node(a).grad;
    for (double& v : ga.v) v += g;
  });
}

DiffTensor Tape::s_add(DiffTensor a, DiffTensor b) {
  check_scalar(a);
  check_scalar(b);
  Tensor out({1});
  out.v[0] = node(a).val.v[0] + node(b).val.v[0];
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const double g = t.nodes_[size_t(self)].grad.v[0];
    if (t.node(a).rg) t.node(a).grad.v[0] += g;
    if (t.node(b).rg) t.node(b).grad.v[0] += g;
  });
}

DiffTensor Tape::s_sub(DiffTensor a, DiffTensor b) {
  check_scalar(a);
  check_scalar(b);
  Tensor out({1});
  out.v[0] = node(a).val.v[0] - node(b).val.v[0];
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const double g = t.nodes_[size_t(self)].grad.v[0];
    if (t.node(a).rg) t.node(a).grad.v[0] += g;
    if (t.node(b).rg) t.node(b).grad.v[0] -= g;
  });
}

DiffTensor Tape::s_mul(DiffTensor a, DiffTensor b) {
  check_scalar(a);
  check_scalar(b);
  Tensor out({1});
  out.v[0] = node(a).val.v[0] * node(b).val.v[0];
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const double g = t.nodes_[size_t(self)].grad.v[0];
    if (t.node(a).rg) t.node(a).grad.v[0] += g * t.node(b).val.v[0];
    if (t.node(b).rg) t.node(b).grad.v[0] += g * t.node(a).val.v[0];
  });
}

DiffTensor Tape::s_div(DiffTensor a, DiffTensor b) {
  check_scalar(a);
  check_scalar(b);
  const double bv = node(b).val.v[0];
  require(bv != 0.0, ErrorCode::NumericalFailure, "s_div: division by zero");
  Tensor out({1});
  out.v[0] = node(a).val.v[0] / bv;
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b](Tape& t, int self) {
    const double g = t.nodes_[size_t(self)].grad.v[0];
    const double av = t.node(a).val.v[0];
    const double bval = t.node(b).val.v[0];
    if (t.node(a).rg) t.node(a).grad.v[0] += g / bval;
    if (t.node(b).rg) t.node(b).grad.v[0] -= g * av / (bval * bval);
  });
}

DiffTensor Tape::s_add_const(DiffTensor a, double c) {
  check_scalar(a);
  Tensor out({1});
  out.v[0] = node(a).val.v[0] + c;
  return push(std::move(out), node(a).rg, [a](Tape& t, int self) {
    if (t.node(a).rg) t.node(a).grad.v[0] += t.nodes_[size_t(self)].grad.v[0];
  });
}

DiffTensor Tape::s_mul_const(DiffTensor a, double c) {
  check_scalar(a);
  Tensor out({1});
  out.v[0] = node(a).val.v[0] * c;
  return push(std::move(out), node(a).rg, [a, c](Tape& t, int self) {
    if (t.node(a).rg) t.node(a).grad.v[0] += c * t.nodes_[size_t(self)].grad.v[0];
  });
}

DiffTensor Tape::s_log10(DiffTensor a) {
  check_scalar(a);
  const double av = node(a).val.v[0];
  require(av > 0.0, ErrorCode::NumericalFailure, "s_log10: non-positive argument");
  Tensor out({1});
  out.v[0] = std::log10(av);
  return push(std::move(out), node(a).rg, [a](Tape& t, int self) {
    if (!t.node(a).rg) return;
    const double g = t.nodes_[size_t(self)].grad.v[0];
    t.node(a).grad.v[0] += g / (t.node(a).val.v[0] * std::numbers::ln10);
  });
}

DiffTensor Tape::s_exp(DiffTensor a) {
  check_scalar(a);
  Tensor out({1});
  out.v[0] = std::exp(node(a).val.v[0]);
  return push(std::move(out), node(a).rg, [a](Tape& t, int self) {
    if (!t.node(a).rg) return;
    const double g = t.nodes_[size_t(self)].grad.v[0];
    t.node(a).grad.v[0] += g * t.nodes_[size_t(self)].val.v[0];
  });
}

DiffTensor Tape::s_clip(DiffTensor a, double lo, double hi) {
  check_scalar(a);
  require(lo <= hi, ErrorCode::InvalidArgument, "s_clip: lo > hi");
  const double av = node(a).val.v[0];
  Tensor out({1});
  out.v[0] = std::clamp(av, lo, hi);
  return push(std::move(out), node(a).rg, [a, lo, hi](Tape& t, int self) {
    if (!t.node(a).rg) return;
    const double av = t.node(a).val.v[0];
    if (av >= lo && av <= hi)
      t.node(a).grad.v[0] += t.nodes_[size_t(self)].grad.v[0];
  });
}

DiffTensor Tape::s_min(DiffTensor a, DiffTensor b) {
  check_scalar(a);
  check_scalar(b);
  const bool take_a = node(a).val.v[0] <= node(b).val.v[0];
  Tensor out({1});
  out.v[0] = take_a ? node(a).val.v[0] : node(b).val.v[0];
  const bool rg = node(a).rg || node(b).rg;
  return push(std::move(out), rg, [a, b, take_a](Tape& t, int self) {
    const double g = t.nodes_[size_t(self)].grad.v[0];
    DiffTensor sel = take_a ? a : b;
    if (t.node(sel).rg) t.node(sel).grad.v[0] += g;
  });
}

}  // namespace avse
