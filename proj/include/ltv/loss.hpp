#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ltv/box.hpp"
#include "ltv/errors.hpp"
#include "ltv/model.hpp"
#include "ltv/tensor.hpp"

namespace ltv {

struct LossWeights {
  double lambda_obj = 1.0;
  double lambda_cls = 1.0;
  double lambda_loc = 5.0;

  void validate() const {
    if (lambda_obj < 0 || lambda_cls < 0 || lambda_loc < 0)
      throw ConfigError("loss weights must be non-negative");
  }
};

template <typename T>
struct LossBreakdown {
  T total = T(0), obj = T(0), cls = T(0), loc = T(0);
};

/// Numerically stable binary cross-entropy of one logit against a target
/// probability: max(z,0) - z*t + log(1 + exp(-|z|)).
template <typename T>
T bce_scalar(T logit, T target) {
  if (!(target >= T(0) && target <= T(1)))
    throw ValidationError("bce: target outside [0,1]");
  const T z = logit;
  const T abs_z = z < T(0) ? -z : z;
  return std::max(z, T(0)) - z * target + std::log1p(std::exp(-abs_z));
}

/// d(bce)/d(logit) = sigmoid(logit) - target.
template <typename T>
T bce_grad(T logit, T target) {
  return sigmoid(logit) - target;
}

template <typename T>
T bce_loss(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.dims != targets.dims)
    throw ShapeError("bce_loss: logits " + logits.shape_str() + " vs targets " +
                     targets.shape_str());
  if (logits.data.empty()) throw ValidationError("bce_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.data.size(); ++i)
    sum += static_cast<double>(bce_scalar(logits.data[i], targets.data[i]));
  return static_cast<T>(sum / static_cast<double>(logits.data.size()));
}

/// One ground-truth box in absolute padded-image pixels, center format.
struct GtBox {
  double cx = 0, cy = 0, w = 0, h = 0;
  int class_id = 0;
};

/// A ground truth bound to its (level, batch index, cell) slot.
struct AssignedTarget {
  int level = 0;
  std::int64_t n = 0, i = 0, j = 0;
  GtBox box;
};

template <typename T>
struct TargetGrids {
  std::vector<Tensor<T>> objectness;  // (N,1,H_l,W_l) per level, 0/1
  std::vector<AssignedTarget> positives;
  std::int64_t dropped = 0;
};

namespace detail {

inline int level_for_box(const GtBox& b, const ModelConfig&) {
  // Longest side decides, so thin upright pedestrians land on the level whose
  // receptive field spans them rather than one picked by their small area.
  const double side = std::max(b.w, b.h);
  if (side < 48.0) return 0;
  if (side < 112.0) return 1;
  return 2;
}

}  // namespace detail

/// Assigns each ground truth to exactly one (level, cell). Level is chosen by
/// the box's longest side, the cell by the box center. When two boxes land in
/// one cell the larger stays and the smaller retries one level coarser until
/// it runs off the pyramid and is dropped (counted, not fatal).
template <typename T>
TargetGrids<T> assign_targets(const std::vector<std::vector<GtBox>>& batch_boxes,
                              const ModelConfig& cfg, std::int64_t padded_h,
                              std::int64_t padded_w) {
  cfg.validate();
  if (padded_h % cfg.max_stride() != 0 || padded_w % cfg.max_stride() != 0)
    throw ShapeError("assign_targets: padded dims must be divisible by the max stride");
  const std::int64_t N = static_cast<std::int64_t>(batch_boxes.size());
  TargetGrids<T> out;
  out.objectness.resize(3);
  std::vector<std::vector<std::int64_t>> occupant(3);  // index into positives, -1 free
  for (int l = 0; l < 3; ++l) {
    const std::int64_t h = padded_h / cfg.strides[l];
    const std::int64_t w = padded_w / cfg.strides[l];
    out.objectness[l].resize(N, 1, h, w);
    out.objectness[l].fill(T(0));
    occupant[l].assign(static_cast<std::size_t>(N * h * w), -1);
  }

  auto place = [&](std::int64_t n, GtBox box, int level) {
    while (level < 3) {
      const std::int64_t stride = cfg.strides[level];
      const std::int64_t gw = padded_w / stride, gh = padded_h / stride;
      const std::int64_t j = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(box.cx / static_cast<double>(stride)), 0, gw - 1);
      const std::int64_t i = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(box.cy / static_cast<double>(stride)), 0, gh - 1);
      const std::size_t slot = static_cast<std::size_t>((n * gh + i) * gw + j);
      std::int64_t& occ = occupant[level][slot];
      if (occ < 0) {
        occ = static_cast<std::int64_t>(out.positives.size());
        out.positives.push_back({level, n, i, j, box});
        return;
      }
      AssignedTarget& holder = out.positives[static_cast<std::size_t>(occ)];
      if (box.w * box.h > holder.box.w * holder.box.h) {
        GtBox evicted = holder.box;
        holder.box = box;
        box = evicted;  // the smaller box escalates
      }
      ++level;
    }
    ++out.dropped;
  };

  for (std::int64_t n = 0; n < N; ++n) {
    for (const GtBox& b : batch_boxes[static_cast<std::size_t>(n)]) {
      if (!(b.w > 0.0) || !(b.h > 0.0))
        throw ValidationError("assign_targets: zero-area ground-truth box");
      place(n, b, detail::level_for_box(b, cfg));
    }
  }
  for (const auto& p : out.positives) {
    const std::int64_t w = out.objectness[p.level].w();
    out.objectness[p.level].data[static_cast<std::size_t>((p.n * out.objectness[p.level].h() +
                                                           p.i) *
                                                              w +
                                                          p.j)] = T(1);
  }
  return out;
}

namespace detail {

template <typename T>
void check_pred_shapes(const RawPredictions<T>& preds, const TargetGrids<T>& targets,
                       const ModelConfig& cfg) {
  if (preds.size() != 3 || targets.objectness.size() != 3)
    throw ShapeError("composite_loss: expected 3 pyramid levels");
  for (int l = 0; l < 3; ++l) {
    const auto& p = preds[static_cast<std::size_t>(l)];
    const auto& t = targets.objectness[static_cast<std::size_t>(l)];
    if (p.c() != cfg.head_channels())
      throw ShapeError("composite_loss: level " + std::to_string(l) + " has " +
                       std::to_string(p.c()) + " channels, expected " +
                       std::to_string(cfg.head_channels()));
    if (p.n() != t.n() || p.h() != t.h() || p.w() != t.w())
      throw ShapeError("composite_loss: prediction/target grid mismatch at level " +
                       std::to_string(l));
  }
}

}  // namespace detail

/// Composite objective: lambda_obj * BCE(all objectness cells)
/// + lambda_cls * BCE(positive cells' class logits, one-hot)
/// + lambda_loc * mean CIoU(decoded positive boxes, ground truth).
/// When `grads` is non-null it receives d(total)/d(raw predictions).
template <typename T>
LossBreakdown<T> composite_loss(const RawPredictions<T>& preds, const TargetGrids<T>& targets,
                                const ModelConfig& cfg, const LossWeights& w,
                                RawPredictions<T>* grads = nullptr) {
  detail::check_pred_shapes(preds, targets, cfg);
  const std::int64_t K = cfg.num_classes;
  if (grads) {
    grads->resize(3);
    for (int l = 0; l < 3; ++l) {
      (*grads)[l].resize(preds[l].n(), preds[l].c(), preds[l].h(), preds[l].w());
      (*grads)[l].fill(T(0));
    }
  }

  // Objectness over every cell of every level.
  double obj_sum = 0.0;
  std::int64_t obj_count = 0;
  for (int l = 0; l < 3; ++l) {
    const auto& p = preds[l];
    const auto& t = targets.objectness[l];
    const std::int64_t hw = p.h() * p.w();
    for (std::int64_t n = 0; n < p.n(); ++n) {
      const T* logits = p.plane(n, 4);
      const T* tgt = t.plane(n, 0);
      for (std::int64_t i = 0; i < hw; ++i)
        obj_sum += static_cast<double>(bce_scalar(logits[i], tgt[i]));
      obj_count += hw;
    }
  }
  const double obj = obj_sum / static_cast<double>(obj_count);
  if (grads) {
    for (int l = 0; l < 3; ++l) {
      const auto& p = preds[l];
      const auto& t = targets.objectness[l];
      const std::int64_t hw = p.h() * p.w();
      const T scale = static_cast<T>(w.lambda_obj / static_cast<double>(obj_count));
      for (std::int64_t n = 0; n < p.n(); ++n) {
        const T* logits = p.plane(n, 4);
        const T* tgt = t.plane(n, 0);
        T* g = (*grads)[l].plane(n, 4);
        for (std::int64_t i = 0; i < hw; ++i) g[i] = scale * bce_grad(logits[i], tgt[i]);
      }
    }
  }

  // Class and localization terms over assigned cells only.
  double cls_sum = 0.0, loc_sum = 0.0;
  const std::int64_t npos = static_cast<std::int64_t>(targets.positives.size());
  for (const AssignedTarget& a : targets.positives) {
    const auto& p = preds[a.level];
    const std::int64_t hw = p.h() * p.w();
    const std::int64_t cell = a.i * p.w() + a.j;
    auto logit_at = [&](std::int64_t c) { return p.plane(a.n, c)[cell]; };

    for (std::int64_t k = 0; k < K; ++k) {
      const T tgt = (k == a.box.class_id) ? T(1) : T(0);
      cls_sum += static_cast<double>(bce_scalar(logit_at(5 + k), tgt));
      if (grads)
        (*grads)[a.level].plane(a.n, 5 + k)[cell] +=
            static_cast<T>(w.lambda_cls / static_cast<double>(npos * K)) *
            bce_grad(logit_at(5 + k), tgt);
    }

    const double stride = static_cast<double>(cfg.strides[a.level]);
    const double tx = static_cast<double>(logit_at(0)), ty = static_cast<double>(logit_at(1));
    const double tw = static_cast<double>(logit_at(2)), th = static_cast<double>(logit_at(3));
    double cx, cy, bw, bh;
    decode_cell(tx, ty, tw, th, a.i, a.j, stride, cfg.head_box_clamp, &cx, &cy, &bw, &bh);
    if (grads) {
      double dcx, dcy, dw_, dh_;
      loc_sum += ciou_loss_grad(cx, cy, bw, bh, a.box.cx, a.box.cy, a.box.w, a.box.h, &dcx, &dcy,
                                &dw_, &dh_);
      const double sx = sigmoid(tx), sy = sigmoid(ty);
      const double scale = w.lambda_loc / static_cast<double>(npos);
      const bool w_clamped = tw < -cfg.head_box_clamp || tw > cfg.head_box_clamp;
      const bool h_clamped = th < -cfg.head_box_clamp || th > cfg.head_box_clamp;
      (*grads)[a.level].plane(a.n, 0)[cell] +=
          static_cast<T>(scale * dcx * stride * sx * (1.0 - sx));
      (*grads)[a.level].plane(a.n, 1)[cell] +=
          static_cast<T>(scale * dcy * stride * sy * (1.0 - sy));
      (*grads)[a.level].plane(a.n, 2)[cell] +=
          static_cast<T>(w_clamped ? 0.0 : scale * dw_ * bw);
      (*grads)[a.level].plane(a.n, 3)[cell] +=
          static_cast<T>(h_clamped ? 0.0 : scale * dh_ * bh);
    } else {
      loc_sum += ciou_loss(cx, cy, bw, bh, a.box.cx, a.box.cy, a.box.w, a.box.h);
    }
  }

  LossBreakdown<T> out;
  out.obj = static_cast<T>(obj);
  out.cls = npos > 0 ? static_cast<T>(cls_sum / static_cast<double>(npos * K)) : T(0);
  out.loc = npos > 0 ? static_cast<T>(loc_sum / static_cast<double>(npos)) : T(0);
  out.total = static_cast<T>(w.lambda_obj) * out.obj + static_cast<T>(w.lambda_cls) * out.cls +
              static_cast<T>(w.lambda_loc) * out.loc;
  return out;
}

}  // namespace ltv
