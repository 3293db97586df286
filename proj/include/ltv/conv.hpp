#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

#include "ltv/tensor.hpp"

namespace ltv {

/// Convolution parameter block. Depthwise means groups == C_in == C_out;
/// pointwise means a 1x1 kernel with groups == 1.
template <typename T>
struct ConvParams {
  Tensor<T> kernel;  // (C_out, C_in/groups, kH, kW)
  std::vector<T> bias;  // empty or length C_out
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;
  std::int64_t groups = 1;

  std::int64_t out_channels() const { return kernel.n(); }
  std::int64_t in_channels() const { return kernel.c() * groups; }
  std::int64_t kh() const { return kernel.h(); }
  std::int64_t kw() const { return kernel.w(); }

  void validate() const {
    if (groups < 1) throw ConfigError("conv: groups must be >= 1");
    if (stride_h < 1 || stride_w < 1) throw ConfigError("conv: stride must be positive");
    if (pad_h < 0 || pad_w < 0) throw ConfigError("conv: padding must be non-negative");
    if (out_channels() % groups != 0)
      throw ConfigError("conv: groups must divide C_out");
    if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != out_channels())
      throw ShapeError("conv: bias length does not match C_out");
  }

  std::int64_t out_h(std::int64_t in_h) const {
    return (in_h + 2 * pad_h - kh()) / stride_h + 1;
  }
  std::int64_t out_w(std::int64_t in_w) const {
    return (in_w + 2 * pad_w - kw()) / stride_w + 1;
  }
};

namespace detail {

template <typename T>
void check_conv_pre(const Tensor<T>& input, const ConvParams<T>& p) {
  p.validate();
  if (input.c() != p.in_channels())
    throw ShapeError("conv: input has " + std::to_string(input.c()) + " channels, kernel expects " +
                     std::to_string(p.in_channels()));
  if (input.c() % p.groups != 0) throw ConfigError("conv: groups must divide C_in");
  if (p.out_h(input.h()) < 1 || p.out_w(input.w()) < 1)
    throw ShapeError("conv: output spatial size would be < 1 for input " + input.shape_str());
  input.require_finite("conv input");
}

}  // namespace detail

/// Direct 2D convolution (cross-correlation) with zero padding.
/// Output shape (N, C_out, out_h, out_w) per the ConvParams formula.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  detail::check_conv_pre(input, p);
  const std::int64_t N = input.n(), H = input.h(), W = input.w();
  const std::int64_t OC = p.out_channels(), KH = p.kh(), KW = p.kw();
  const std::int64_t OH = p.out_h(H), OW = p.out_w(W);
  const std::int64_t cpg_in = input.c() / p.groups;   // input channels per group
  const std::int64_t cpg_out = OC / p.groups;
  Tensor<T> out(N, OC, OH, OW);

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t oc = 0; oc < OC; ++oc) {
      const std::int64_t g = oc / cpg_out;
      T* out_plane = out.plane(n, oc);
      if (!p.bias.empty())
        std::fill(out_plane, out_plane + OH * OW, p.bias[static_cast<std::size_t>(oc)]);
      for (std::int64_t icg = 0; icg < cpg_in; ++icg) {
        const std::int64_t ic = g * cpg_in + icg;
        const T* in_plane = input.plane(n, ic);
        for (std::int64_t ky = 0; ky < KH; ++ky) {
          for (std::int64_t oy = 0; oy < OH; ++oy) {
            const std::int64_t iy = oy * p.stride_h - p.pad_h + ky;
            if (iy < 0 || iy >= H) continue;
            const T* in_row = in_plane + iy * W;
            T* out_row = out_plane + oy * OW;
            for (std::int64_t kx = 0; kx < KW; ++kx) {
              const T w = p.kernel.at(oc, icg, ky, kx);
              if (w == T(0)) {
                // skip only when exactly zero: adding w*x == 0 is a no-op
                continue;
              }
              // valid ox range so that ix = ox*sw - pw + kx lies in [0, W)
              std::int64_t ox_lo = 0;
              const std::int64_t off = kx - p.pad_w;
              if (off < 0) ox_lo = (-off + p.stride_w - 1) / p.stride_w;
              std::int64_t ox_hi = OW;  // exclusive
              if (off > W - 1) ox_hi = 0;
              else {
                const std::int64_t max_ox = (W - 1 - off) / p.stride_w;
                ox_hi = std::min<std::int64_t>(OW, max_ox + 1);
              }
              const T* in_base = in_row + off;
              if (p.stride_w == 1) {
                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox)
                  out_row[ox] += w * in_base[ox];
              } else {
                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox)
                  out_row[ox] += w * in_base[ox * p.stride_w];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Depthwise convolution: one filter per channel, groups == C_in == C_out.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  if (p.groups != input.c() || p.out_channels() != input.c() || p.kernel.c() != 1)
    throw ConfigError("depthwise_conv2d: requires groups == C_in == C_out");
  return conv2d(input, p);
}

/// Pointwise convolution: 1x1 kernel, groups == 1 (per-pixel channel mix).
template <typename T>
Tensor<T> pointwise_conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  if (p.kh() != 1 || p.kw() != 1)
    throw ConfigError("pointwise_conv2d: kernel must be 1x1");
  if (p.groups != 1) throw ConfigError("pointwise_conv2d: groups must be 1");
  return conv2d(input, p);
}

/// Gradients of conv2d w.r.t. input, kernel and bias.
/// grad_input/grad_kernel are resized and overwritten; grad_bias may be null.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p, const Tensor<T>& grad_out,
                     std::type_identity_t<Tensor<T>*> grad_input,
                     std::type_identity_t<Tensor<T>*> grad_kernel,
                     std::type_identity_t<std::vector<T>*> grad_bias) {
  detail::check_conv_pre(input, p);
  const std::int64_t N = input.n(), H = input.h(), W = input.w();
  const std::int64_t OC = p.out_channels(), KH = p.kh(), KW = p.kw();
  const std::int64_t OH = p.out_h(H), OW = p.out_w(W);
  if (grad_out.n() != N || grad_out.c() != OC || grad_out.h() != OH || grad_out.w() != OW)
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape_str() + " mismatch");
  const std::int64_t cpg_in = input.c() / p.groups;
  const std::int64_t cpg_out = OC / p.groups;

  if (grad_input) grad_input->resize(N, input.c(), H, W);
  if (grad_kernel) grad_kernel->resize(OC, cpg_in, KH, KW);
  if (grad_bias) grad_bias->assign(static_cast<std::size_t>(OC), T(0));

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t oc = 0; oc < OC; ++oc) {
      const std::int64_t g = oc / cpg_out;
      const T* go_plane = grad_out.plane(n, oc);
      if (grad_bias) {
        T s = T(0);
        for (std::int64_t i = 0; i < OH * OW; ++i) s += go_plane[i];
        (*grad_bias)[static_cast<std::size_t>(oc)] += s;
      }
      for (std::int64_t icg = 0; icg < cpg_in; ++icg) {
        const std::int64_t ic = g * cpg_in + icg;
        const T* in_plane = input.plane(n, ic);
        T* gi_plane = grad_input ? grad_input->plane(n, ic) : nullptr;
        for (std::int64_t ky = 0; ky < KH; ++ky) {
          for (std::int64_t oy = 0; oy < OH; ++oy) {
            const std::int64_t iy = oy * p.stride_h - p.pad_h + ky;
            if (iy < 0 || iy >= H) continue;
            const T* in_row = in_plane + iy * W;
            T* gi_row = gi_plane ? gi_plane + iy * W : nullptr;
            const T* go_row = go_plane + oy * OW;
            for (std::int64_t kx = 0; kx < KW; ++kx) {
              const std::int64_t off = kx - p.pad_w;
              std::int64_t ox_lo = 0;
              if (off < 0) ox_lo = (-off + p.stride_w - 1) / p.stride_w;
              std::int64_t ox_hi = OW;
              if (off > W - 1) ox_hi = 0;
              else ox_hi = std::min<std::int64_t>(OW, (W - 1 - off) / p.stride_w + 1);
              const T w = p.kernel.at(oc, icg, ky, kx);
              T kacc = T(0);
              for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                const std::int64_t ix = ox * p.stride_w + off;
                const T go = go_row[ox];
                kacc += go * in_row[ix];
                if (gi_row) gi_row[ix] += go * w;
              }
              if (grad_kernel) grad_kernel->at(oc, icg, ky, kx) += kacc;
            }
          }
        }
      }
    }
  }
}

// --- Closed-form parameter / multiply-accumulate counts ---------------------

inline std::int64_t conv_param_count(std::int64_t c_in, std::int64_t c_out, std::int64_t kh,
                                     std::int64_t kw, std::int64_t groups, bool bias) {
  return c_out * (c_in / groups) * kh * kw + (bias ? c_out : 0);
}

/// Parameters of a depthwise kxk + pointwise 1x1 pair (no bias).
inline std::int64_t separable_param_count(std::int64_t c_in, std::int64_t c_out, std::int64_t k) {
  return conv_param_count(c_in, c_in, k, k, c_in, false) +
         conv_param_count(c_in, c_out, 1, 1, 1, false);
}

/// Multiply-accumulates of one convolution at the given output size.
inline std::int64_t conv_mac_count(std::int64_t c_in, std::int64_t c_out, std::int64_t kh,
                                   std::int64_t kw, std::int64_t groups, std::int64_t out_h,
                                   std::int64_t out_w) {
  return c_out * (c_in / groups) * kh * kw * out_h * out_w;
}

/// Parameter (equivalently MAC) ratio of a separable kxk block vs a standard
/// kxk convolution with the same channel counts: 1/c_out + 1/k^2.
inline double separable_ratio(std::int64_t c_in, std::int64_t c_out, std::int64_t k) {
  const double sep = static_cast<double>(separable_param_count(c_in, c_out, k));
  const double full = static_cast<double>(conv_param_count(c_in, c_out, k, k, 1, false));
  return sep / full;
}

}  // namespace ltv
