#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ltv/conv.hpp"
#include "ltv/errors.hpp"
#include "ltv/ops.hpp"
#include "ltv/rng.hpp"
#include "ltv/tensor.hpp"

namespace ltv {

enum class Activation { silu };

struct ModelConfig {
  std::int64_t input_channels = 1;
  std::int64_t stem_channels = 32;
  std::array<std::int64_t, 4> stage_channels{64, 128, 256, 512};
  std::array<std::int64_t, 4> blocks_per_stage{1, 2, 4, 2};
  std::int64_t fpn_channels = 192;
  std::int64_t num_classes = 2;
  std::array<std::int64_t, 3> strides{8, 16, 32};
  Activation activation = Activation::silu;
  double head_box_clamp = 8.0;

  std::int64_t max_stride() const { return strides[2]; }
  std::int64_t head_channels() const { return 5 + num_classes; }

  void validate() const {
    if (input_channels < 1) throw ConfigError("model config: input_channels must be >= 1");
    if (stem_channels < 1) throw ConfigError("model config: stem_channels must be >= 1");
    if (fpn_channels < 1) throw ConfigError("model config: fpn_channels must be >= 1");
    if (num_classes < 1) throw ConfigError("model config: num_classes must be >= 1");
    for (auto c : stage_channels)
      if (c < 1) throw ConfigError("model config: stage_channels must be >= 1");
    for (auto b : blocks_per_stage)
      if (b < 1) throw ConfigError("model config: blocks_per_stage must be >= 1");
    std::int64_t prev = 0;
    for (auto s : strides) {
      if (s <= prev || (s & (s - 1)) != 0)
        throw ConfigError("model config: strides must be strictly increasing powers of two");
      prev = s;
    }
    if (!(head_box_clamp > 0)) throw ConfigError("model config: head_box_clamp must be > 0");
  }
};

/// Full-size configuration; lands just above 1M learnable scalars.
inline ModelConfig reference_config() { return ModelConfig{}; }

/// Analytic multiply-add count (times two) for one forward pass at the given
/// input size, counting convolutions only; BN and activations are linear in
/// pixel count and contribute under a percent.
inline std::int64_t flops_estimate(const ModelConfig& cfg, std::int64_t in_h,
                                   std::int64_t in_w) {
  cfg.validate();
  if (in_h % cfg.max_stride() != 0 || in_w % cfg.max_stride() != 0)
    throw ValidationError("flops_estimate: input must be a multiple of the max stride");
  std::int64_t macs = 0;
  std::int64_t h = in_h / 2, w = in_w / 2;
  macs += h * w * 9 * cfg.input_channels * cfg.stem_channels;
  std::int64_t in_c = cfg.stem_channels;
  std::array<std::int64_t, 2> tap_dims[3];
  for (int s = 0; s < 4; ++s) {
    h /= 2;
    w /= 2;
    const std::int64_t out_c = cfg.stage_channels[static_cast<std::size_t>(s)];
    for (std::int64_t b = 0; b < cfg.blocks_per_stage[static_cast<std::size_t>(s)]; ++b) {
      const std::int64_t c_in = b == 0 ? in_c : out_c;
      macs += h * w * (9 * c_in + c_in * out_c);
    }
    in_c = out_c;
    if (s >= 1) tap_dims[s - 1] = {h, w};
  }
  for (int k = 0; k < 3; ++k) {
    const auto [lh, lw] = tap_dims[k];
    macs += lh * lw * cfg.stage_channels[static_cast<std::size_t>(k + 1)] * cfg.fpn_channels;
    macs += lh * lw * (9 * cfg.fpn_channels + cfg.fpn_channels * cfg.fpn_channels);  // smooth
    macs += lh * lw * (9 * cfg.fpn_channels + cfg.fpn_channels * cfg.fpn_channels);  // head body
    macs += lh * lw * cfg.fpn_channels * cfg.head_channels();
  }
  return 2 * macs;
}

/// Same topology at f64 gradient-check scale.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.stem_channels = 4;
  c.stage_channels = {8, 16, 32, 64};
  c.blocks_per_stage = {1, 1, 1, 1};
  c.fpn_channels = 24;
  return c;
}

/// Desk-scale training configuration for smoke tests and demos.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.stem_channels = 8;
  c.stage_channels = {16, 32, 64, 128};
  c.blocks_per_stage = {1, 1, 2, 1};
  c.fpn_channels = 48;
  return c;
}

/// One raw head output per pyramid level, finest first.
/// Channel layout: [tx, ty, tw, th, obj_logit, class_logits...].
template <typename T>
using RawPredictions = std::vector<Tensor<T>>;

namespace detail {

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::silu:
      return silu(x);
  }
  throw ConfigError("unknown activation");
}

template <typename T>
Tensor<T> activate_backward(const Tensor<T>& saved_input, const Tensor<T>& grad_out,
                            Activation act) {
  Tensor<T> gi;
  switch (act) {
    case Activation::silu:
      silu_backward(saved_input, grad_out, &gi);
      return gi;
  }
  throw ConfigError("unknown activation");
}

}  // namespace detail

/// Convolution layer owning its gradient buffers. Each layer appears exactly
/// once in the graph, so backward overwrites rather than accumulates.
template <typename T>
struct ConvLayer {
  ConvParams<T> p;
  Tensor<T> grad_kernel;
  std::vector<T> grad_bias;

  void init_shapes(std::int64_t out_c, std::int64_t in_c_per_group, std::int64_t kh,
                   std::int64_t kw, bool with_bias, std::int64_t stride, std::int64_t pad,
                   std::int64_t groups) {
    p.kernel.resize(out_c, in_c_per_group, kh, kw);
    p.bias.assign(with_bias ? static_cast<std::size_t>(out_c) : 0, T(0));
    p.stride_h = p.stride_w = stride;
    p.pad_h = p.pad_w = pad;
    p.groups = groups;
    grad_kernel.resize(out_c, in_c_per_group, kh, kw);
    grad_bias.assign(p.bias.size(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, p); }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
    Tensor<T> gi;
    conv2d_backward(x, p, grad_out, &gi, &grad_kernel, p.bias.empty() ? nullptr : &grad_bias);
    return gi;
  }

  void zero_grads() {
    grad_kernel.fill(T(0));
    std::fill(grad_bias.begin(), grad_bias.end(), T(0));
  }

  std::int64_t param_count() const {
    return static_cast<std::int64_t>(p.kernel.data.size() + p.bias.size());
  }
};

template <typename T>
struct BnLayer {
  BatchNormParams<T> p;
  std::vector<T> grad_gamma, grad_beta;

  void init_shapes(std::int64_t channels) {
    p.resize(channels);
    grad_gamma.assign(static_cast<std::size_t>(channels), T(0));
    grad_beta.assign(static_cast<std::size_t>(channels), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, BnContext<T>* ctx) {
    return batch_norm(x, p, mode, ctx);
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const BnContext<T>& ctx) {
    Tensor<T> gi;
    batch_norm_backward(grad_out, p, ctx, &gi, &grad_gamma, &grad_beta);
    return gi;
  }

  void zero_grads() {
    std::fill(grad_gamma.begin(), grad_gamma.end(), T(0));
    std::fill(grad_beta.begin(), grad_beta.end(), T(0));
  }
};

/// Stem: standard 3x3 stride-2 conv -> BN -> activation.
template <typename T>
struct StemBlock {
  ConvLayer<T> conv;
  BnLayer<T> bn;
  Activation act = Activation::silu;

  struct Cache {
    Tensor<T> x_in;
    BnContext<T> bn_ctx;
    Tensor<T> bn_out;
  };

  void init_shapes(std::int64_t in_c, std::int64_t out_c, Activation a) {
    conv.init_shapes(out_c, in_c, 3, 3, false, 2, 1, 1);
    bn.init_shapes(out_c);
    act = a;
  }

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, Cache* cache) {
    Tensor<T> c = conv.forward(x);
    Tensor<T> b = bn.forward(c, mode, cache ? &cache->bn_ctx : nullptr);
    Tensor<T> out = detail::activate(b, act);
    if (cache) {
      cache->x_in = x;
      cache->bn_out = std::move(b);
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const Cache& cache) {
    Tensor<T> g = detail::activate_backward(cache.bn_out, grad_out, act);
    g = bn.backward(g, cache.bn_ctx);
    return conv.backward(cache.x_in, g);
  }
};

/// Depthwise-separable block: dw3x3 -> BN -> act -> pw1x1 -> BN -> act.
template <typename T>
struct SepBlock {
  ConvLayer<T> dw, pw;
  BnLayer<T> bn1, bn2;
  Activation act = Activation::silu;

  struct Cache {
    Tensor<T> x_in;
    BnContext<T> bn1_ctx, bn2_ctx;
    Tensor<T> bn1_out, act1_out, bn2_out;
  };

  void init_shapes(std::int64_t in_c, std::int64_t out_c, std::int64_t stride, Activation a) {
    dw.init_shapes(in_c, 1, 3, 3, false, stride, 1, in_c);
    bn1.init_shapes(in_c);
    pw.init_shapes(out_c, in_c, 1, 1, false, 1, 0, 1);
    bn2.init_shapes(out_c);
    act = a;
  }

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, Cache* cache) {
    Tensor<T> d = dw.forward(x);
    Tensor<T> b1 = bn1.forward(d, mode, cache ? &cache->bn1_ctx : nullptr);
    Tensor<T> a1 = detail::activate(b1, act);
    Tensor<T> pz = pw.forward(a1);
    Tensor<T> b2 = bn2.forward(pz, mode, cache ? &cache->bn2_ctx : nullptr);
    Tensor<T> out = detail::activate(b2, act);
    if (cache) {
      cache->x_in = x;
      cache->bn1_out = std::move(b1);
      cache->act1_out = std::move(a1);
      cache->bn2_out = std::move(b2);
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const Cache& cache) {
    Tensor<T> g = detail::activate_backward(cache.bn2_out, grad_out, act);
    g = bn2.backward(g, cache.bn2_ctx);
    g = pw.backward(cache.act1_out, g);
    g = detail::activate_backward(cache.bn1_out, g, act);
    g = bn1.backward(g, cache.bn1_ctx);
    return dw.backward(cache.x_in, g);
  }

  std::int64_t param_count() const {
    return dw.param_count() + pw.param_count() +
           2 * (bn1.p.channels() + bn2.p.channels());
  }
};

template <typename T>
struct HeadBlock {
  SepBlock<T> block;
  ConvLayer<T> final;  // 1x1 -> (5 + num_classes), with bias

  struct Cache {
    typename SepBlock<T>::Cache block_cache;
    Tensor<T> block_out;
  };

  void init_shapes(std::int64_t in_c, std::int64_t out_c, Activation a) {
    block.init_shapes(in_c, in_c, 1, a);
    final.init_shapes(out_c, in_c, 1, 1, true, 1, 0, 1);
  }

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, Cache* cache) {
    Tensor<T> b = block.forward(x, mode, cache ? &cache->block_cache : nullptr);
    Tensor<T> out = final.forward(b);
    if (cache) cache->block_out = std::move(b);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const Cache& cache) {
    Tensor<T> g = final.backward(cache.block_out, grad_out);
    return block.backward(g, cache.block_cache);
  }
};

/// View into one named parameter or buffer of the model. `grad` is null for
/// non-learnable buffers (BN running statistics).
template <typename T>
struct ParamView {
  std::string name;
  T* data = nullptr;
  T* grad = nullptr;
  std::int64_t size = 0;
  std::vector<std::uint32_t> dims;
  bool learnable = true;
};

template <typename T>
class Model {
 public:
  Model() = default;

  explicit Model(const ModelConfig& cfg) { build(cfg); }

  void build(const ModelConfig& cfg) {
    cfg.validate();
    cfg_ = cfg;
    stem_.init_shapes(cfg.input_channels, cfg.stem_channels, cfg.activation);
    stages_.clear();
    std::int64_t in_c = cfg.stem_channels;
    for (int s = 0; s < 4; ++s) {
      std::vector<SepBlock<T>> stage(static_cast<std::size_t>(cfg.blocks_per_stage[s]));
      const std::int64_t out_c = cfg.stage_channels[s];
      for (std::size_t b = 0; b < stage.size(); ++b) {
        stage[b].init_shapes(b == 0 ? in_c : out_c, out_c, b == 0 ? 2 : 1, cfg.activation);
      }
      in_c = out_c;
      stages_.push_back(std::move(stage));
    }
    for (int k = 0; k < 3; ++k) {
      laterals_[k].init_shapes(cfg.fpn_channels, cfg.stage_channels[k + 1], 1, 1, true, 1, 0, 1);
      smooth_[k].init_shapes(cfg.fpn_channels, cfg.fpn_channels, 1, cfg.activation);
      heads_[k].init_shapes(cfg.fpn_channels, cfg.head_channels(), cfg.activation);
    }
  }

  const ModelConfig& config() const { return cfg_; }

  /// Saved activations from one recorded forward pass.
  struct Tape {
    typename StemBlock<T>::Cache stem;
    std::array<std::vector<typename SepBlock<T>::Cache>, 4> stages;
    std::array<Tensor<T>, 3> lateral_in;   // backbone taps c2, c3, c4
    std::array<Tensor<T>, 3> merged;       // p0, p1, p2 before smoothing
    std::array<typename SepBlock<T>::Cache, 3> smooth;
    std::array<Tensor<T>, 3> smoothed;     // n0, n1, n2 (head inputs)
    std::array<typename HeadBlock<T>::Cache, 3> heads;
    bool recorded = false;
  };

  RawPredictions<T> forward(const Tensor<T>& input, BnMode mode, Tape* tape = nullptr) {
    if (input.c() != cfg_.input_channels)
      throw ShapeError("forward: expected " + std::to_string(cfg_.input_channels) +
                       " input channels, got " + std::to_string(input.c()));
    if (input.h() % cfg_.max_stride() != 0 || input.w() % cfg_.max_stride() != 0)
      throw ShapeError("forward: input " + std::to_string(input.h()) + "x" +
                       std::to_string(input.w()) + " not divisible by stride " +
                       std::to_string(cfg_.max_stride()) + "; letterbox the frame first");
    input.require_finite("forward input");

    if (tape) {
      for (int s = 0; s < 4; ++s)
        tape->stages[s].resize(static_cast<std::size_t>(cfg_.blocks_per_stage[s]));
    }

    Tensor<T> x = stem_.forward(input, mode, tape ? &tape->stem : nullptr);
    std::array<Tensor<T>, 3> taps;
    for (int s = 0; s < 4; ++s) {
      auto& stage = stages_[static_cast<std::size_t>(s)];
      for (std::size_t b = 0; b < stage.size(); ++b) {
        x = stage[b].forward(x, mode, tape ? &tape->stages[s][b] : nullptr);
      }
      if (s >= 1) taps[s - 1] = x;
    }

    // Top-down FPN: coarsest lateral passes through; finer levels add a 2x
    // upsample of the level above.
    std::array<Tensor<T>, 3> merged;
    merged[2] = laterals_[2].forward(taps[2]);
    merged[1] = add(laterals_[1].forward(taps[1]), upsample_nearest_2x(merged[2]));
    merged[0] = add(laterals_[0].forward(taps[0]), upsample_nearest_2x(merged[1]));

    RawPredictions<T> out(3);
    for (int k = 0; k < 3; ++k) {
      Tensor<T> n = smooth_[k].forward(merged[k], mode, tape ? &tape->smooth[k] : nullptr);
      out[static_cast<std::size_t>(k)] =
          heads_[k].forward(n, mode, tape ? &tape->heads[k] : nullptr);
      if (tape) tape->smoothed[k] = std::move(n);
    }
    if (tape) {
      tape->lateral_in = std::move(taps);
      tape->merged = std::move(merged);
      tape->recorded = true;
    }
    return out;
  }

  /// Backpropagates per-level prediction gradients through the whole graph,
  /// overwriting every layer's gradient buffers. Requires a recorded
  /// train-mode forward.
  void backward(const RawPredictions<T>& grad_preds, const Tape& tape) {
    if (!tape.recorded) throw StateError("backward: no recorded forward pass");
    if (grad_preds.size() != 3) throw ShapeError("backward: expected 3 per-level gradients");

    std::array<Tensor<T>, 3> g_merged;
    for (int k = 0; k < 3; ++k) {
      Tensor<T> gn = heads_[k].backward(grad_preds[static_cast<std::size_t>(k)], tape.heads[k]);
      g_merged[k] = smooth_[k].backward(gn, tape.smooth[k]);
    }

    // Reverse the top-down pathway: finer-level gradients flow up to the
    // coarser merge via the upsample adjoint.
    std::array<Tensor<T>, 3> g_taps;
    g_taps[0] = laterals_[0].backward(tape.lateral_in[0], g_merged[0]);
    g_merged[1] = add(g_merged[1], upsample_nearest_2x_backward(g_merged[0]));
    g_taps[1] = laterals_[1].backward(tape.lateral_in[1], g_merged[1]);
    g_merged[2] = add(g_merged[2], upsample_nearest_2x_backward(g_merged[1]));
    g_taps[2] = laterals_[2].backward(tape.lateral_in[2], g_merged[2]);

    Tensor<T> g = std::move(g_taps[2]);
    for (int s = 3; s >= 0; --s) {
      auto& stage = stages_[static_cast<std::size_t>(s)];
      for (std::size_t b = stage.size(); b-- > 0;) {
        g = stage[b].backward(g, tape.stages[s][b]);
      }
      if (s >= 2) g = add(g, g_taps[s - 2]);
    }
    stem_.backward(g, tape.stem);
  }

  void zero_grads() {
    for_each_layer([](ConvLayer<T>& c) { c.zero_grads(); },
                   [](BnLayer<T>& b) { b.zero_grads(); });
  }

  /// Enumerates all parameters and buffers in a fixed order. The order
  /// defines initialization, serialization and optimizer-state layout.
  std::vector<ParamView<T>> params() {
    std::vector<ParamView<T>> out;
    auto push_conv = [&](const std::string& prefix, ConvLayer<T>& c) {
      ParamView<T> k;
      k.name = prefix + ".kernel";
      k.data = c.p.kernel.data.data();
      k.grad = c.grad_kernel.data.data();
      k.size = static_cast<std::int64_t>(c.p.kernel.data.size());
      k.dims = {static_cast<std::uint32_t>(c.p.kernel.n()),
                static_cast<std::uint32_t>(c.p.kernel.c()),
                static_cast<std::uint32_t>(c.p.kernel.h()),
                static_cast<std::uint32_t>(c.p.kernel.w())};
      out.push_back(std::move(k));
      if (!c.p.bias.empty()) {
        ParamView<T> b;
        b.name = prefix + ".bias";
        b.data = c.p.bias.data();
        b.grad = c.grad_bias.data();
        b.size = static_cast<std::int64_t>(c.p.bias.size());
        b.dims = {static_cast<std::uint32_t>(c.p.bias.size())};
        out.push_back(std::move(b));
      }
    };
    auto push_vec = [&](const std::string& name, std::vector<T>& v, T* grad, bool learnable) {
      ParamView<T> pv;
      pv.name = name;
      pv.data = v.data();
      pv.grad = grad;
      pv.size = static_cast<std::int64_t>(v.size());
      pv.dims = {static_cast<std::uint32_t>(v.size())};
      pv.learnable = learnable;
      out.push_back(std::move(pv));
    };
    auto push_bn = [&](const std::string& prefix, BnLayer<T>& b) {
      push_vec(prefix + ".gamma", b.p.gamma, b.grad_gamma.data(), true);
      push_vec(prefix + ".beta", b.p.beta, b.grad_beta.data(), true);
      push_vec(prefix + ".running_mean", b.p.running_mean, nullptr, false);
      push_vec(prefix + ".running_var", b.p.running_var, nullptr, false);
    };
    auto push_sep = [&](const std::string& prefix, SepBlock<T>& s) {
      push_conv(prefix + ".dw", s.dw);
      push_bn(prefix + ".bn1", s.bn1);
      push_conv(prefix + ".pw", s.pw);
      push_bn(prefix + ".bn2", s.bn2);
    };

    push_conv("stem.conv", stem_.conv);
    push_bn("stem.bn", stem_.bn);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (std::size_t b = 0; b < stages_[s].size(); ++b) {
        push_sep("backbone.s" + std::to_string(s) + ".b" + std::to_string(b), stages_[s][b]);
      }
    }
    for (int k = 0; k < 3; ++k)
      push_conv("fpn.lateral" + std::to_string(k), laterals_[k]);
    for (int k = 0; k < 3; ++k)
      push_sep("fpn.smooth" + std::to_string(k), smooth_[k]);
    for (int k = 0; k < 3; ++k) {
      const std::string prefix = "head" + std::to_string(k);
      push_sep(prefix + ".block", heads_[k].block);
      push_conv(prefix + ".final", heads_[k].final);
    }
    return out;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (const auto& p : params())
      if (p.learnable) n += p.size;
    return n;
  }

  /// Kaiming fan-in initialization, deterministic in the seed. BN starts as
  /// identity; the objectness bias starts low so early training is not
  /// swamped by negative cells.
  void init(std::uint64_t seed) {
    Rng rng(seed);
    auto kaiming = [&](ConvLayer<T>& c) {
      const double fan_in =
          static_cast<double>(c.p.kernel.c() * c.p.kernel.h() * c.p.kernel.w());
      const double stddev = std::sqrt(2.0 / fan_in);
      for (auto& v : c.p.kernel.data) v = static_cast<T>(rng.normal() * stddev);
      std::fill(c.p.bias.begin(), c.p.bias.end(), T(0));
    };
    auto identity_bn = [&](BnLayer<T>& b) {
      std::fill(b.p.gamma.begin(), b.p.gamma.end(), T(1));
      std::fill(b.p.beta.begin(), b.p.beta.end(), T(0));
      std::fill(b.p.running_mean.begin(), b.p.running_mean.end(), T(0));
      std::fill(b.p.running_var.begin(), b.p.running_var.end(), T(1));
    };
    for_each_layer(kaiming, identity_bn);
    for (int k = 0; k < 3; ++k) heads_[k].final.p.bias[4] = T(-4);
    zero_grads();
  }

  /// Applies a uniform BN momentum; momentum 1 turns the next train-mode
  /// forward into a one-shot running-stat calibration pass.
  void set_bn_momentum(T momentum) {
    for_each_layer([](ConvLayer<T>&) {}, [&](BnLayer<T>& b) { b.p.momentum = momentum; });
  }

  StemBlock<T>& stem() { return stem_; }
  std::vector<std::vector<SepBlock<T>>>& stages() { return stages_; }
  std::array<ConvLayer<T>, 3>& laterals() { return laterals_; }
  std::array<SepBlock<T>, 3>& smooth() { return smooth_; }
  std::array<HeadBlock<T>, 3>& heads() { return heads_; }

  template <typename U>
  Model<U> cast() {
    Model<U> m(cfg_);
    auto src = params();
    auto dst = m.params();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::int64_t j = 0; j < src[i].size; ++j)
        dst[i].data[j] = static_cast<U>(src[i].data[j]);
    return m;
  }

 private:
  template <typename ConvFn, typename BnFn>
  void for_each_layer(ConvFn conv_fn, BnFn bn_fn) {
    auto sep = [&](SepBlock<T>& s) {
      conv_fn(s.dw);
      bn_fn(s.bn1);
      conv_fn(s.pw);
      bn_fn(s.bn2);
    };
    conv_fn(stem_.conv);
    bn_fn(stem_.bn);
    for (auto& stage : stages_)
      for (auto& block : stage) sep(block);
    for (auto& l : laterals_) conv_fn(l);
    for (auto& s : smooth_) sep(s);
    for (auto& h : heads_) {
      sep(h.block);
      conv_fn(h.final);
    }
  }

  ModelConfig cfg_;
  StemBlock<T> stem_;
  std::vector<std::vector<SepBlock<T>>> stages_;
  std::array<ConvLayer<T>, 3> laterals_;
  std::array<SepBlock<T>, 3> smooth_;
  std::array<HeadBlock<T>, 3> heads_;
};

using ModelF = Model<float>;
using ModelD = Model<double>;

/// Multiply-accumulate estimate of one forward pass at the given input size.
/// `separable` false prices every separable block as if it were a single
/// standard 3x3 convolution of the same in/out channels and stride.
inline std::int64_t flop_estimate(const ModelConfig& cfg, std::int64_t in_h, std::int64_t in_w,
                                  bool separable = true) {
  cfg.validate();
  if (in_h % cfg.max_stride() != 0 || in_w % cfg.max_stride() != 0)
    throw ShapeError("flop_estimate: input dims must be divisible by the max stride");
  std::int64_t macs = 0;
  auto sep_macs = [&](std::int64_t in_c, std::int64_t out_c, std::int64_t oh, std::int64_t ow) {
    if (separable)
      macs += oh * ow * (9 * in_c + in_c * out_c);
    else
      macs += oh * ow * 9 * in_c * out_c;
  };
  std::int64_t h = in_h / 2, w = in_w / 2;
  macs += h * w * cfg.stem_channels * cfg.input_channels * 9;
  std::int64_t in_c = cfg.stem_channels;
  std::array<std::array<std::int64_t, 2>, 3> tap_dims{};
  for (int s = 0; s < 4; ++s) {
    h /= 2;
    w /= 2;
    const std::int64_t out_c = cfg.stage_channels[s];
    for (std::int64_t b = 0; b < cfg.blocks_per_stage[s]; ++b)
      sep_macs(b == 0 ? in_c : out_c, out_c, h, w);
    in_c = out_c;
    if (s >= 1) tap_dims[s - 1] = {h, w};
  }
  for (int k = 0; k < 3; ++k) {
    const auto [th, tw] = tap_dims[k];
    macs += th * tw * cfg.fpn_channels * cfg.stage_channels[k + 1];  // lateral
    sep_macs(cfg.fpn_channels, cfg.fpn_channels, th, tw);            // smooth
    sep_macs(cfg.fpn_channels, cfg.fpn_channels, th, tw);            // head block
    macs += th * tw * cfg.head_channels() * cfg.fpn_channels;        // head final
  }
  return macs;
}

}  // namespace ltv
