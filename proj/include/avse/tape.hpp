#pragma once

#include <functional>
#include <vector>

#include "avse/tensor.hpp"

namespace avse {

// Handle into a Tape's node list.
struct DiffTensor {
  int id = -1;
};

// Minimal reverse-mode tape over dense tensors. A tape lives for one forward
// plus one backward; optimizer steps build a fresh tape, which keeps every
// grad zeroed at the start of the step. backward() walks the node list in
// reverse creation order, so each node's rule runs exactly once.
class Tape {
 public:
  DiffTensor leaf(const Tensor& t, bool requires_grad);

  const Tensor& val(DiffTensor h) const { return node(h).val; }
  const Tensor& grad(DiffTensor h) const { return node(h).grad; }
  bool requires_grad(DiffTensor h) const { return node(h).rg; }
  double scalar(DiffTensor h) const;

  // Elementwise and structural ops.
  DiffTensor add(DiffTensor a, DiffTensor b);
  DiffTensor sub(DiffTensor a, DiffTensor b);
  DiffTensor mul(DiffTensor a, DiffTensor b);
  DiffTensor relu(DiffTensor x);
  DiffTensor sigmoid(DiffTensor x);
  DiffTensor prelu(DiffTensor x, DiffTensor alpha);  // alpha has shape [1]
  DiffTensor concat_rows(DiffTensor a, DiffTensor b);
  DiffTensor interp_time(DiffTensor x, int t_out);
  DiffTensor fit_length(DiffTensor x, int out_len);  // crop or zero-pad a vector
  DiffTensor add_const(DiffTensor x, const Tensor& c);
  DiffTensor sub_const(DiffTensor x, const Tensor& c);       // x - c
  DiffTensor scale_const_vec(DiffTensor s, const Tensor& c); // scalar s times fixed c

  // Convolution kernels (shapes as in kernels.hpp).
  DiffTensor conv1d(DiffTensor x, DiffTensor w, DiffTensor b, int stride);
  DiffTensor pointwise(DiffTensor x, DiffTensor w, DiffTensor b);
  DiffTensor depthwise(DiffTensor x, DiffTensor w, DiffTensor b, int dilation);
  DiffTensor tconv(DiffTensor x, DiffTensor w, DiffTensor b, int stride);  // b shape [1]

  // Reductions and scalar arithmetic (operands of shape [1]).
  DiffTensor dot(DiffTensor a, DiffTensor b);
  DiffTensor sum(DiffTensor a);
  DiffTensor s_add(DiffTensor a, DiffTensor b);
  DiffTensor s_sub(DiffTensor a, DiffTensor b);
  DiffTensor s_mul(DiffTensor a, DiffTensor b);
  DiffTensor s_div(DiffTensor a, DiffTensor b);
  DiffTensor s_add_const(DiffTensor a, double c);
  DiffTensor s_mul_const(DiffTensor a, double c);
  DiffTensor s_log10(DiffTensor a);
  DiffTensor s_exp(DiffTensor a);
  DiffTensor s_clip(DiffTensor a, double lo, double hi);
  DiffTensor s_min(DiffTensor a, DiffTensor b);

  // Seeds d(root)/d(root) = 1 and accumulates into every requires-grad node.
  void backward(DiffTensor root);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool rg = false;
    std::function<void(Tape&, int)> back;  // (tape, own id)
  };

  const Node& node(DiffTensor h) const;
  Node& node(DiffTensor h);
  DiffTensor push(Tensor val, bool rg, std::function<void(Tape&, int)> back);
  void check_scalar(DiffTensor h) const;

  std::vector<Node> nodes_;
};

}  // namespace avse
