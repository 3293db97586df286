#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ltv/errors.hpp"

namespace ltv {

/// Axis-aligned box, corner form. Box math runs in double regardless of the
/// tensor scalar type; per-cell cost is negligible next to the convolutions.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  static BBox from_center(double cx, double cy, double w, double h) {
    return BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  void validate() const {
    if (x2 < x1 || y2 < y1) throw ValidationError("box has inverted corners");
  }
};

/// Ground-truth box with its class label, shared by augmentation and eval.
struct LabeledBox {
  BBox box;
  int class_id = 0;
};

/// Intersection-over-union in [0, 1]; a degenerate union counts as 0.
inline double iou(const BBox& a, const BBox& b) {
  a.validate();
  b.validate();
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

namespace detail {
constexpr double kCiouEps = 1e-9;
constexpr double kFourOverPiSq = 4.0 / (M_PI * M_PI);
}  // namespace detail

/// Complete-IoU loss between boxes given in center form:
///   1 - IoU + rho^2/c^2 + v^2 / ((1 - IoU) + v)
/// where rho is the center distance, c the enclosing-box diagonal, and v the
/// aspect-ratio penalty. Zero iff the boxes are identical.
inline double ciou_loss(double pcx, double pcy, double pw, double ph, double gcx, double gcy,
                        double gw, double gh) {
  if (pw <= 0 || ph <= 0 || gw <= 0 || gh <= 0)
    throw ValidationError("ciou_loss: box sizes must be positive");
  const BBox p = BBox::from_center(pcx, pcy, pw, ph);
  const BBox g = BBox::from_center(gcx, gcy, gw, gh);
  const double iou_v = iou(p, g);
  const double u = 1.0 - iou_v;
  const double rho2 = (pcx - gcx) * (pcx - gcx) + (pcy - gcy) * (pcy - gcy);
  const double cw = std::max(p.x2, g.x2) - std::min(p.x1, g.x1);
  const double ch = std::max(p.y2, g.y2) - std::min(p.y1, g.y1);
  const double c2 = cw * cw + ch * ch;
  const double delta = std::atan(gw / gh) - std::atan(pw / ph);
  const double v = detail::kFourOverPiSq * delta * delta;
  return u + rho2 / c2 + v * v / (u + v + detail::kCiouEps);
}

inline double ciou_loss(const BBox& pred, const BBox& gt) {
  return ciou_loss(pred.cx(), pred.cy(), pred.width(), pred.height(), gt.cx(), gt.cy(), gt.width(),
                   gt.height());
}

/// CIoU loss and its exact gradient w.r.t. the predicted center-form box.
/// The alpha coupling term is differentiated in full (not held constant) so
/// analytic gradients agree with finite differences.
inline double ciou_loss_grad(double pcx, double pcy, double pw, double ph, double gcx, double gcy,
                             double gw, double gh, double* dcx, double* dcy, double* dw,
                             double* dh) {
  if (pw <= 0 || ph <= 0 || gw <= 0 || gh <= 0)
    throw ValidationError("ciou_loss_grad: box sizes must be positive");
  const double px1 = pcx - 0.5 * pw, px2 = pcx + 0.5 * pw;
  const double py1 = pcy - 0.5 * ph, py2 = pcy + 0.5 * ph;
  const double gx1 = gcx - 0.5 * gw, gx2 = gcx + 0.5 * gw;
  const double gy1 = gcy - 0.5 * gh, gy2 = gcy + 0.5 * gh;

  const double iw = std::min(px2, gx2) - std::max(px1, gx1);
  const double ih = std::min(py2, gy2) - std::max(py1, gy1);
  const bool overlap = iw > 0 && ih > 0;
  const double inter = overlap ? iw * ih : 0.0;
  const double area_p = pw * ph, area_g = gw * gh;
  const double uni = area_p + area_g - inter;
  const double iou_v = uni > 0 ? inter / uni : 0.0;
  const double u = 1.0 - iou_v;

  // dI in corner coordinates, then chained to (cx, cy, w, h)
  double dI_cx = 0, dI_cy = 0, dI_w = 0, dI_h = 0;
  if (overlap) {
    const double dI_px1 = (px1 > gx1) ? -ih : 0.0;
    const double dI_px2 = (px2 < gx2) ? ih : 0.0;
    const double dI_py1 = (py1 > gy1) ? -iw : 0.0;
    const double dI_py2 = (py2 < gy2) ? iw : 0.0;
    dI_cx = dI_px1 + dI_px2;
    dI_cy = dI_py1 + dI_py2;
    dI_w = 0.5 * (dI_px2 - dI_px1);
    dI_h = 0.5 * (dI_py2 - dI_py1);
  }
  const double dA_w = ph, dA_h = pw;
  // dIoU = (dI*U - I*dU)/U^2 with dU = dA - dI
  auto diou = [&](double dI, double dA) {
    return uni > 0 ? (dI * uni - inter * (dA - dI)) / (uni * uni) : 0.0;
  };
  const double dIoU_cx = diou(dI_cx, 0.0);
  const double dIoU_cy = diou(dI_cy, 0.0);
  const double dIoU_w = diou(dI_w, dA_w);
  const double dIoU_h = diou(dI_h, dA_h);

  const double rho2 = (pcx - gcx) * (pcx - gcx) + (pcy - gcy) * (pcy - gcy);
  const double cw = std::max(px2, gx2) - std::min(px1, gx1);
  const double ch = std::max(py2, gy2) - std::min(py1, gy1);
  const double c2 = cw * cw + ch * ch;

  const double dcw_px1 = (px1 < gx1) ? -1.0 : 0.0;
  const double dcw_px2 = (px2 > gx2) ? 1.0 : 0.0;
  const double dch_py1 = (py1 < gy1) ? -1.0 : 0.0;
  const double dch_py2 = (py2 > gy2) ? 1.0 : 0.0;
  const double dcw_cx = dcw_px1 + dcw_px2;
  const double dcw_w = 0.5 * (dcw_px2 - dcw_px1);
  const double dch_cy = dch_py1 + dch_py2;
  const double dch_h = 0.5 * (dch_py2 - dch_py1);

  const double dc2_cx = 2.0 * cw * dcw_cx;
  const double dc2_cy = 2.0 * ch * dch_cy;
  const double dc2_w = 2.0 * cw * dcw_w;
  const double dc2_h = 2.0 * ch * dch_h;

  const double drho2_cx = 2.0 * (pcx - gcx);
  const double drho2_cy = 2.0 * (pcy - gcy);

  auto ddist = [&](double drho2, double dc2) { return (drho2 * c2 - rho2 * dc2) / (c2 * c2); };

  const double delta = std::atan(gw / gh) - std::atan(pw / ph);
  const double v = detail::kFourOverPiSq * delta * delta;
  const double wh2 = pw * pw + ph * ph;
  const double dv_w = 2.0 * detail::kFourOverPiSq * delta * (-ph / wh2);
  const double dv_h = 2.0 * detail::kFourOverPiSq * delta * (pw / wh2);

  const double den = u + v + detail::kCiouEps;
  const double dT_du = -v * v / (den * den);
  const double dT_dv = (2.0 * v * den - v * v) / (den * den);

  // L = u + rho2/c2 + v^2/(u + v + eps), with du = -dIoU
  const double dL_du = 1.0 + dT_du;
  if (dcx) *dcx = -dL_du * dIoU_cx + ddist(drho2_cx, dc2_cx);
  if (dcy) *dcy = -dL_du * dIoU_cy + ddist(drho2_cy, dc2_cy);
  if (dw) *dw = -dL_du * dIoU_w + ddist(0.0, dc2_w) + dT_dv * dv_w;
  if (dh) *dh = -dL_du * dIoU_h + ddist(0.0, dc2_h) + dT_dv * dv_h;

  return u + rho2 / c2 + v * v / den;
}

/// Maps raw head outputs at grid cell (i, j) to a center-format box in
/// padded-image pixels. tw/th are clamped before exp so early-training
/// outliers cannot overflow.
inline void decode_cell(double tx, double ty, double tw, double th, std::int64_t i,
                        std::int64_t j, double stride, double clamp_limit, double* cx, double* cy,
                        double* w, double* h) {
  const double sx = 1.0 / (1.0 + std::exp(-tx));
  const double sy = 1.0 / (1.0 + std::exp(-ty));
  *cx = (static_cast<double>(j) + sx) * stride;
  *cy = (static_cast<double>(i) + sy) * stride;
  *w = stride * std::exp(std::clamp(tw, -clamp_limit, clamp_limit));
  *h = stride * std::exp(std::clamp(th, -clamp_limit, clamp_limit));
}

/// Inverse of decode_cell for a box whose center lies inside cell (i, j).
inline void encode_cell(double cx, double cy, double w, double h, std::int64_t i, std::int64_t j,
                        double stride, double* tx, double* ty, double* tw, double* th) {
  const double fx = cx / stride - static_cast<double>(j);
  const double fy = cy / stride - static_cast<double>(i);
  if (fx <= 0.0 || fx >= 1.0 || fy <= 0.0 || fy >= 1.0)
    throw ValidationError("encode_cell: box center not strictly inside the cell");
  if (w <= 0.0 || h <= 0.0) throw ValidationError("encode_cell: non-positive box size");
  *tx = std::log(fx / (1.0 - fx));
  *ty = std::log(fy / (1.0 - fy));
  *tw = std::log(w / stride);
  *th = std::log(h / stride);
}

}  // namespace ltv
