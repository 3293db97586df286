#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ltv/tensor.hpp"

namespace ltv {

enum class BnMode { train, infer };

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma, beta, running_mean, running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);  // running = (1-m)*running + m*batch

  explicit BatchNormParams(std::int64_t channels = 0) { resize(channels); }

  void resize(std::int64_t channels) {
    gamma.assign(static_cast<std::size_t>(channels), T(1));
    beta.assign(static_cast<std::size_t>(channels), T(0));
    running_mean.assign(static_cast<std::size_t>(channels), T(0));
    running_var.assign(static_cast<std::size_t>(channels), T(1));
  }

  std::int64_t channels() const { return static_cast<std::int64_t>(gamma.size()); }

  void validate() const {
    if (epsilon <= T(0)) throw ConfigError("batch_norm: epsilon must be > 0");
    for (const T& v : running_var)
      if (v < T(0)) throw ConfigError("batch_norm: running_var entries must be >= 0");
    if (beta.size() != gamma.size() || running_mean.size() != gamma.size() ||
        running_var.size() != gamma.size())
      throw ShapeError("batch_norm: parameter vectors must share one length");
  }
};

/// Saved forward context needed by batch_norm_backward.
template <typename T>
struct BnContext {
  std::vector<T> batch_mean, batch_inv_std;  // per channel
  Tensor<T> x_hat;
};

/// Per-channel normalization. Train mode uses batch statistics (biased
/// variance) and updates the running estimates in place; infer mode uses the
/// stored running statistics. `ctx` may be null when no backward is needed.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormParams<T>& params, BnMode mode,
                     BnContext<T>* ctx = nullptr) {
  params.validate();
  if (input.c() != params.channels())
    throw ShapeError("batch_norm: input has " + std::to_string(input.c()) +
                     " channels, params have " + std::to_string(params.channels()));
  const std::int64_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
  const std::int64_t hw = H * W;
  const std::int64_t m = N * hw;
  Tensor<T> out(N, C, H, W);
  if (ctx) {
    ctx->batch_mean.assign(static_cast<std::size_t>(C), T(0));
    ctx->batch_inv_std.assign(static_cast<std::size_t>(C), T(0));
    ctx->x_hat.resize(N, C, H, W);
  }

  for (std::int64_t c = 0; c < C; ++c) {
    T mean, inv_std;
    if (mode == BnMode::train) {
      if (m == 0) throw ShapeError("batch_norm: empty batch in train mode");
      double sum = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = input.plane(n, c);
        for (std::int64_t i = 0; i < hw; ++i) sum += static_cast<double>(p[i]);
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = input.plane(n, c);
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      mean = static_cast<T>(mu);
      inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(params.epsilon)));
      const std::size_t ci = static_cast<std::size_t>(c);
      params.running_mean[ci] =
          (T(1) - params.momentum) * params.running_mean[ci] + params.momentum * mean;
      params.running_var[ci] =
          (T(1) - params.momentum) * params.running_var[ci] + params.momentum * static_cast<T>(var);
    } else {
      const std::size_t ci = static_cast<std::size_t>(c);
      mean = params.running_mean[ci];
      inv_std = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(params.running_var[ci]) +
                          static_cast<double>(params.epsilon)));
    }
    const T g = params.gamma[static_cast<std::size_t>(c)];
    const T b = params.beta[static_cast<std::size_t>(c)];
    for (std::int64_t n = 0; n < N; ++n) {
      const T* in_p = input.plane(n, c);
      T* out_p = out.plane(n, c);
      T* xh_p = ctx ? ctx->x_hat.plane(n, c) : nullptr;
      for (std::int64_t i = 0; i < hw; ++i) {
        const T xh = (in_p[i] - mean) * inv_std;
        if (xh_p) xh_p[i] = xh;
        out_p[i] = g * xh + b;
      }
    }
    if (ctx) {
      ctx->batch_mean[static_cast<std::size_t>(c)] = mean;
      ctx->batch_inv_std[static_cast<std::size_t>(c)] = inv_std;
    }
  }
  return out;
}

/// Train-mode batch-norm backward using the saved context.
template <typename T>
void batch_norm_backward(const Tensor<T>& grad_out, const BatchNormParams<T>& params,
                         const BnContext<T>& ctx, Tensor<T>* grad_input,
                         std::vector<T>* grad_gamma, std::vector<T>* grad_beta) {
  const std::int64_t N = grad_out.n(), C = grad_out.c(), hw = grad_out.h() * grad_out.w();
  if (ctx.x_hat.dims != grad_out.dims)
    throw StateError("batch_norm_backward: saved forward context does not match grad shape");
  const std::int64_t m = N * hw;
  if (grad_input) grad_input->resize(N, C, grad_out.h(), grad_out.w());
  if (grad_gamma) grad_gamma->assign(static_cast<std::size_t>(C), T(0));
  if (grad_beta) grad_beta->assign(static_cast<std::size_t>(C), T(0));

  for (std::int64_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* go = grad_out.plane(n, c);
      const T* xh = ctx.x_hat.plane(n, c);
      for (std::int64_t i = 0; i < hw; ++i) {
        sum_dy += static_cast<double>(go[i]);
        sum_dy_xh += static_cast<double>(go[i]) * static_cast<double>(xh[i]);
      }
    }
    if (grad_gamma) (*grad_gamma)[static_cast<std::size_t>(c)] = static_cast<T>(sum_dy_xh);
    if (grad_beta) (*grad_beta)[static_cast<std::size_t>(c)] = static_cast<T>(sum_dy);
    if (grad_input) {
      const T g = params.gamma[static_cast<std::size_t>(c)];
      const T inv_std = ctx.batch_inv_std[static_cast<std::size_t>(c)];
      const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(m));
      const T mean_dy_xh = static_cast<T>(sum_dy_xh / static_cast<double>(m));
      for (std::int64_t n = 0; n < N; ++n) {
        const T* go = grad_out.plane(n, c);
        const T* xh = ctx.x_hat.plane(n, c);
        T* gi = grad_input->plane(n, c);
        for (std::int64_t i = 0; i < hw; ++i)
          gi[i] = g * inv_std * (go[i] - mean_dy - xh[i] * mean_dy_xh);
      }
    }
  }
}

/// Numerically stable logistic sigmoid.
template <typename T>
inline T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// SiLU (x * sigmoid(x)), applied elementwise.
template <typename T>
Tensor<T> silu(const Tensor<T>& input) {
  input.require_finite("silu input");
  Tensor<T> out = input;
  for (T& v : out.data) v = v * sigmoid(v);
  return out;
}

/// d(silu)/dx = sigmoid(x) * (1 + x * (1 - sigmoid(x))).
template <typename T>
inline T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

template <typename T>
void silu_backward(const Tensor<T>& saved_input, const Tensor<T>& grad_out, Tensor<T>* grad_input) {
  if (!saved_input.same_shape(grad_out))
    throw StateError("silu_backward: saved input does not match grad shape");
  grad_input->resize(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
  for (std::size_t i = 0; i < grad_out.data.size(); ++i)
    grad_input->data[i] = grad_out.data[i] * silu_grad(saved_input.data[i]);
}

/// Nearest-neighbor 2x upsampling: each pixel becomes a 2x2 block.
template <typename T>
Tensor<T> upsample_nearest_2x(const Tensor<T>& input) {
  const std::int64_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
  Tensor<T> out(N, C, 2 * H, 2 * W);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const T* in_p = input.plane(n, c);
      T* out_p = out.plane(n, c);
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x) {
          const T v = in_p[y * W + x];
          T* o = out_p + (2 * y) * (2 * W) + 2 * x;
          o[0] = v;
          o[1] = v;
          o[2 * W] = v;
          o[2 * W + 1] = v;
        }
    }
  return out;
}

/// Backward of nearest 2x upsampling: sum each 2x2 grad block.
template <typename T>
Tensor<T> upsample_nearest_2x_backward(const Tensor<T>& grad_out) {
  const std::int64_t N = grad_out.n(), C = grad_out.c();
  const std::int64_t H = grad_out.h() / 2, W = grad_out.w() / 2;
  if (grad_out.h() != 2 * H || grad_out.w() != 2 * W)
    throw ShapeError("upsample backward: grad dims must be even");
  Tensor<T> out(N, C, H, W);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const T* go = grad_out.plane(n, c);
      T* gi = out.plane(n, c);
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x) {
          const T* g = go + (2 * y) * (2 * W) + 2 * x;
          gi[y * W + x] = g[0] + g[1] + g[2 * W] + g[2 * W + 1];
        }
    }
  return out;
}

}  // namespace ltv
