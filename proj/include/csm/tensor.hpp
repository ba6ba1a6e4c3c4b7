#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "csm/errors.hpp"

namespace csm {

// Dense row-major tensor. Precision is the template parameter: training runs
// in f32, gradient-check and oracle paths in f64.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> values;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    values.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<int64_t> s, std::vector<T> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (static_cast<int64_t>(values.size()) != numel_of(shape))
      throw UsageError("tensor value count does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t e : s) {
      if (e <= 0) throw UsageError("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  bool is_scalar() const { return values.size() == 1; }

  int64_t rows() const { return shape.size() == 2 ? shape[0] : (shape.size() == 1 ? 1 : -1); }
  int64_t cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : -1); }

  T& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * cols() + c)]; }
  T at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.values.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
    return out;
  }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace csm
