#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "avse/common.hpp"

namespace avse {

// Dense row-major array of doubles with a small shape vector. This is the
// value type moved through the autodiff tape and the model checkpoints.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(elems_of(shape), 0.0);
  }

  Tensor(std::vector<int> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    require(v.size() == elems_of(shape), ErrorCode::InvalidArgument,
            "tensor data does not match shape");
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }

  static size_t elems_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      require(d >= 0, ErrorCode::InvalidArgument, "negative dimension");
      n *= size_t(d);
    }
    return n;
  }

  size_t size() const { return v.size(); }
  int dim(size_t i) const { return shape[i]; }

  double& at(int i) { return v[size_t(i)]; }
  double at(int i) const { return v[size_t(i)]; }
  double& at(int i, int j) { return v[size_t(i) * size_t(shape[1]) + size_t(j)]; }
  double at(int i, int j) const { return v[size_t(i) * size_t(shape[1]) + size_t(j)]; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace avse
