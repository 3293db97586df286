#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "ltv/errors.hpp"

namespace ltv {

/// Dense rank-4 tensor in (N, C, H, W) row-major layout, N outermost.
/// T is float for inference/training storage and double for gradient checks.
template <typename T>
struct Tensor {
  std::array<std::int64_t, 4> dims{0, 0, 0, 0};  // N, C, H, W
  std::vector<T> data;

  Tensor() = default;

  Tensor(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) { resize(n, c, h, w); }

  void resize(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw ShapeError("tensor dims must be non-negative");
    dims = {n, c, h, w};
    data.assign(static_cast<std::size_t>(n * c * h * w), T(0));
  }

  static Tensor zeros_like(const Tensor& other) {
    return Tensor(other.n(), other.c(), other.h(), other.w());
  }

  std::int64_t n() const { return dims[0]; }
  std::int64_t c() const { return dims[1]; }
  std::int64_t h() const { return dims[2]; }
  std::int64_t w() const { return dims[3]; }
  std::int64_t numel() const { return dims[0] * dims[1] * dims[2] * dims[3]; }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << dims[0] << "," << dims[1] << "," << dims[2] << "," << dims[3] << ")";
    return os.str();
  }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * dims[1] + c) * dims[2] + h) * dims[3] + w;
  }

  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data[static_cast<std::size_t>(index(n, c, h, w))];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data[static_cast<std::size_t>(index(n, c, h, w))];
  }

  T* plane(std::int64_t n, std::int64_t c) { return data.data() + index(n, c, 0, 0); }
  const T* plane(std::int64_t n, std::int64_t c) const { return data.data() + index(n, c, 0, 0); }

  void fill(T value) { std::fill(data.begin(), data.end(), value); }

  void zero_() { fill(T(0)); }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Throws NumericError naming `what` when any element is NaN/Inf.
  void require_finite(const char* what) const {
    if (!all_finite())
      throw NumericError(std::string("non-finite values in ") + what);
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(dims[0], dims[1], dims[2], dims[3]);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Elementwise sum; shapes must match exactly.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

/// Channel concatenation, `a` channels first. N, H, W must match.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: N/H/W mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::int64_t hw = a.h() * a.w();
  for (std::int64_t n = 0; n < a.n(); ++n) {
    for (std::int64_t c = 0; c < a.c(); ++c)
      std::copy(a.plane(n, c), a.plane(n, c) + hw, out.plane(n, c));
    for (std::int64_t c = 0; c < b.c(); ++c)
      std::copy(b.plane(n, c), b.plane(n, c) + hw, out.plane(n, a.c() + c));
  }
  return out;
}

}  // namespace ltv
