#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ltv/image.hpp"
#include "ltv/loss.hpp"
#include "ltv/rng.hpp"

namespace ltv {

/// Synthetic thermal street scenes: warm anisotropic "pedestrian" blobs over
/// a smooth cool background, optionally with unlabeled hot isotropic
/// distractors in the road band. Everything is a pure function of the seed.
struct SceneSpec {
  std::int64_t width = 640, height = 512;
  int min_targets = 1, max_targets = 3;
  double min_target_h = 48.0, max_target_h = 160.0;  // pixels
  double aspect_min = 0.35, aspect_max = 0.55;       // body w/h
  double target_peak_min = 0.75, target_peak_max = 0.95;
  double bg_base_min = 0.15, bg_base_max = 0.30;
  double bg_noise = 0.015;
  int min_distractors = 0, max_distractors = 0;  // hot blobs, not labeled
  double distractor_sigma_min = 6.0, distractor_sigma_max = 18.0;
  double distractor_peak_min = 0.7, distractor_peak_max = 0.95;

  void validate() const {
    if (width < 16 || height < 16) throw ValidationError("scene spec: frame too small");
    if (min_targets < 0 || max_targets < min_targets)
      throw ValidationError("scene spec: bad target counts");
    if (min_distractors < 0 || max_distractors < min_distractors)
      throw ValidationError("scene spec: bad distractor counts");
    if (!(min_target_h > 0 && max_target_h >= min_target_h))
      throw ValidationError("scene spec: bad target heights");
  }
};

struct SyntheticScene {
  ThermalFrame frame;
  std::vector<GtBox> boxes;  // pixel center form

  std::vector<LabeledBox> corner_boxes() const {
    std::vector<LabeledBox> out;
    out.reserve(boxes.size());
    for (const GtBox& b : boxes)
      out.push_back({BBox::from_center(b.cx, b.cy, b.w, b.h), b.class_id});
    return out;
  }
};

namespace detail {

inline void paint_blob(ThermalFrame& f, double cx, double cy, double sigma_x, double sigma_y,
                       double peak) {
  const std::int64_t rx = static_cast<std::int64_t>(std::ceil(3.0 * sigma_x));
  const std::int64_t ry = static_cast<std::int64_t>(std::ceil(3.0 * sigma_y));
  const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cx) - rx);
  const std::int64_t x1 = std::min(f.width, static_cast<std::int64_t>(cx) + rx + 1);
  const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cy) - ry);
  const std::int64_t y1 = std::min(f.height, static_cast<std::int64_t>(cy) + ry + 1);
  for (std::int64_t y = y0; y < y1; ++y)
    for (std::int64_t x = x0; x < x1; ++x) {
      const double dx = (static_cast<double>(x) - cx) / sigma_x;
      const double dy = (static_cast<double>(y) - cy) / sigma_y;
      const double add = peak * std::exp(-0.5 * (dx * dx + dy * dy));
      f.at(y, x) = static_cast<float>(std::min(1.0, f.at(y, x) + add));
    }
}

inline ThermalFrame scene_background(const SceneSpec& spec, Rng& rng) {
  // Smooth large-scale temperature variation plus fine sensor noise.
  ThermalFrame coarse = make_frame(6, 6);
  const double base = rng.uniform(spec.bg_base_min, spec.bg_base_max);
  for (float& v : coarse.pixels)
    v = static_cast<float>(std::clamp(base + rng.uniform(-0.04, 0.04), 0.0, 1.0));
  ThermalFrame bg = bilinear_resize(coarse, spec.width, spec.height);
  for (float& v : bg.pixels)
    v = static_cast<float>(
        std::clamp(static_cast<double>(v) + rng.uniform(-spec.bg_noise, spec.bg_noise), 0.0,
                   1.0));
  return bg;
}

}  // namespace detail

/// One scene. Pedestrian class labels follow the paper-style child/adult
/// split by apparent size: targets in the lower height tercile are children.
inline SyntheticScene make_scene(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  SyntheticScene scene;
  scene.frame = detail::scene_background(spec, rng);
  const int targets =
      spec.min_targets + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
                             spec.max_targets - spec.min_targets + 1)));
  const double child_cut = spec.min_target_h + (spec.max_target_h - spec.min_target_h) / 3.0;
  for (int t = 0; t < targets; ++t) {
    GtBox box;
    box.h = rng.uniform(spec.min_target_h, std::min(spec.max_target_h,
                                                    static_cast<double>(spec.height) - 8.0));
    box.w = std::min(box.h * rng.uniform(spec.aspect_min, spec.aspect_max),
                     static_cast<double>(spec.width) - 8.0);
    box.cx = rng.uniform(box.w / 2 + 2.0, static_cast<double>(spec.width) - box.w / 2 - 2.0);
    box.cy = rng.uniform(box.h / 2 + 2.0, static_cast<double>(spec.height) - box.h / 2 - 2.0);
    box.class_id = box.h < child_cut ? 0 : 1;
    const double peak = rng.uniform(spec.target_peak_min, spec.target_peak_max);
    // Body fills the box: the 2-sigma extent matches the half-size.
    detail::paint_blob(scene.frame, box.cx, box.cy, box.w / 4.0, box.h / 4.0, peak);
    scene.boxes.push_back(box);
  }
  const int distractors =
      spec.min_distractors + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
                                 spec.max_distractors - spec.min_distractors + 1)));
  for (int d = 0; d < distractors; ++d) {
    // Isotropic hot spots in the road band (lower half), never labeled.
    const double sigma = rng.uniform(spec.distractor_sigma_min, spec.distractor_sigma_max);
    const double cx = rng.uniform(3.0 * sigma, static_cast<double>(spec.width) - 3.0 * sigma);
    const double cy = rng.uniform(static_cast<double>(spec.height) / 2.0 + 2.0,
                                  static_cast<double>(spec.height) - 2.0);
    detail::paint_blob(scene.frame, cx, cy, sigma, sigma,
                       rng.uniform(spec.distractor_peak_min, spec.distractor_peak_max));
  }
  return scene;
}

inline std::vector<SyntheticScene> make_dataset(const SceneSpec& spec, int count,
                                                std::uint64_t seed) {
  std::vector<SyntheticScene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    scenes.push_back(make_scene(spec, rng));
  }
  return scenes;
}

/// A smooth sequence: the same targets drift with constant per-frame
/// velocity, bouncing off frame edges, over a fixed background.
inline std::vector<SyntheticScene> make_sequence(const SceneSpec& spec, int frames,
                                                 std::uint64_t seed) {
  spec.validate();
  if (frames < 1) throw ValidationError("make_sequence: need at least one frame");
  Rng rng(derive_seed(seed, 0));
  SyntheticScene first = make_scene(spec, rng);
  struct Track {
    GtBox box;
    double vx, vy;
  };
  std::vector<Track> tracks;
  for (const GtBox& b : first.boxes)
    tracks.push_back({b, rng.uniform(-3.0, 3.0), rng.uniform(-1.5, 1.5)});

  std::vector<SyntheticScene> seq;
  seq.reserve(static_cast<std::size_t>(frames));
  Rng bg_rng(derive_seed(seed, 1));
  const ThermalFrame background = detail::scene_background(spec, bg_rng);
  for (int f = 0; f < frames; ++f) {
    SyntheticScene scene;
    scene.frame = background;
    for (Track& t : tracks) {
      scene.boxes.push_back(t.box);
      detail::paint_blob(scene.frame, t.box.cx, t.box.cy, t.box.w / 4.0, t.box.h / 4.0, 0.9);
      t.box.cx += t.vx;
      t.box.cy += t.vy;
      const double half_w = t.box.w / 2 + 2.0, half_h = t.box.h / 2 + 2.0;
      if (t.box.cx < half_w || t.box.cx > spec.width - half_w) {
        t.vx = -t.vx;
        t.box.cx = std::clamp(t.box.cx, half_w, static_cast<double>(spec.width) - half_w);
      }
      if (t.box.cy < half_h || t.box.cy > spec.height - half_h) {
        t.vy = -t.vy;
        t.box.cy = std::clamp(t.box.cy, half_h, static_cast<double>(spec.height) - half_h);
      }
    }
    seq.push_back(std::move(scene));
  }
  return seq;
}

}  // namespace ltv
