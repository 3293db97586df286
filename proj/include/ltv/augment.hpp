#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ltv/box.hpp"
#include "ltv/errors.hpp"
#include "ltv/image.hpp"
#include "ltv/rng.hpp"

namespace ltv {

struct AugmentationSpec {
  double hflip_p = 0.5;
  double brightness_contrast_limit = 0.3;
  double mosaic_p = 1.0;
  double fog_p = 0.0;
  double rain_p = 0.0;
  double temp_bias_p = 0.0;
  double specular_p = 0.0;
  double cut_p = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    const auto check_p = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError(std::string("augmentation: ") + name + " must be in [0,1]");
    };
    check_p(hflip_p, "hflip_p");
    check_p(mosaic_p, "mosaic_p");
    check_p(fog_p, "fog_p");
    check_p(rain_p, "rain_p");
    check_p(temp_bias_p, "temp_bias_p");
    check_p(specular_p, "specular_p");
    check_p(cut_p, "cut_p");
    if (brightness_contrast_limit < 0.0)
      throw ValidationError("augmentation: brightness_contrast_limit must be >= 0");
  }
};

struct Sample {
  ThermalFrame frame;
  std::vector<LabeledBox> boxes;
};

inline Sample hflip_with_boxes(const ThermalFrame& frame,
                               const std::vector<LabeledBox>& boxes) {
  Sample out;
  out.frame = make_frame(frame.width, frame.height);
  out.frame.timestamp = frame.timestamp;
  out.frame.source_id = frame.source_id;
  for (std::int64_t y = 0; y < frame.height; ++y)
    for (std::int64_t x = 0; x < frame.width; ++x)
      out.frame.at(y, x) = frame.at(y, frame.width - 1 - x);
  const double w = static_cast<double>(frame.width);
  out.boxes.reserve(boxes.size());
  for (const LabeledBox& lb : boxes)
    out.boxes.push_back({BBox{w - lb.box.x2, lb.box.y1, w - lb.box.x1, lb.box.y2},
                         lb.class_id});
  return out;
}

/// out = clamp((x - 0.5)(1 + c) + 0.5 + b, 0, 1): contrast pivots at mid-gray.
inline ThermalFrame brightness_contrast(const ThermalFrame& frame, double b, double c) {
  ThermalFrame out = frame;
  for (float& v : out.pixels)
    v = static_cast<float>(
        std::clamp((static_cast<double>(v) - 0.5) * (1.0 + c) + 0.5 + b, 0.0, 1.0));
  return out;
}

/// 2x2 tiling around a split point. Each tile shows the top-left crop of its
/// source sample, so a box that survives clipping is translated by exactly
/// its tile offset. Boxes clipped below 4 px on either side are dropped.
inline Sample mosaic4_at(const std::array<Sample, 4>& samples, std::int64_t sx,
                         std::int64_t sy) {
  const std::int64_t w = samples[0].frame.width;
  const std::int64_t h = samples[0].frame.height;
  for (const Sample& s : samples)
    if (s.frame.width != w || s.frame.height != h)
      throw ValidationError("mosaic4: samples must share dimensions");
  if (sx < 1 || sx >= w || sy < 1 || sy >= h)
    throw ValidationError("mosaic4: split point outside frame");

  Sample out;
  out.frame = make_frame(w, h);
  const std::array<std::int64_t, 4> ox{0, sx, 0, sx};
  const std::array<std::int64_t, 4> oy{0, 0, sy, sy};
  for (int t = 0; t < 4; ++t) {
    const std::int64_t x_end = (t % 2 == 0) ? sx : w;
    const std::int64_t y_end = (t < 2) ? sy : h;
    for (std::int64_t y = oy[t]; y < y_end; ++y)
      for (std::int64_t x = ox[t]; x < x_end; ++x)
        out.frame.at(y, x) = samples[t].frame.at(y - oy[t], x - ox[t]);
    const BBox tile{static_cast<double>(ox[t]), static_cast<double>(oy[t]),
                    static_cast<double>(x_end), static_cast<double>(y_end)};
    for (const LabeledBox& lb : samples[t].boxes) {
      BBox moved{lb.box.x1 + ox[t], lb.box.y1 + oy[t], lb.box.x2 + ox[t], lb.box.y2 + oy[t]};
      BBox clipped{std::max(moved.x1, tile.x1), std::max(moved.y1, tile.y1),
                   std::min(moved.x2, tile.x2), std::min(moved.y2, tile.y2)};
      if (clipped.x2 - clipped.x1 >= 4.0 && clipped.y2 - clipped.y1 >= 4.0)
        out.boxes.push_back({clipped, lb.class_id});
    }
  }
  return out;
}

/// Seeded split point lands in the middle half of each axis.
inline Sample mosaic4(const std::array<Sample, 4>& samples, Rng& rng) {
  const std::int64_t w = samples[0].frame.width;
  const std::int64_t h = samples[0].frame.height;
  const std::int64_t sx = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::llround(rng.uniform(0.25, 0.75) * static_cast<double>(w))),
      1, w - 1);
  const std::int64_t sy = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::llround(rng.uniform(0.25, 0.75) * static_cast<double>(h))),
      1, h - 1);
  return mosaic4_at(samples, sx, sy);
}

inline Sample mosaic4(const std::array<Sample, 4>& samples, std::uint64_t seed) {
  Rng rng(seed);
  return mosaic4(samples, rng);
}

enum class ArtifactMode { temp_bias, specular, cutout, cutmix };

/// Invented ranges for the hot-background suite: the source material describes
/// the artifacts qualitatively only.
struct ArtifactParams {
  int blob_count_min = 1, blob_count_max = 3;
  double blob_sigma_min = 5.0, blob_sigma_max = 25.0;
  double blob_peak_min = 0.5, blob_peak_max = 0.95;
  int strip_count_min = 1, strip_count_max = 2;
  double strip_width_min = 2.0, strip_width_max = 6.0;
  double strip_angle_limit_deg = 15.0;
  double strip_intensity_min = 0.8, strip_intensity_max = 1.0;
  double cut_fraction_min = 0.2, cut_fraction_max = 0.5;
};

struct ArtifactResult {
  ThermalFrame frame;
  bool applied = true;
};

namespace detail {

/// Integer pixel bounds of a box, clamped to the frame.
struct PixelRect {
  std::int64_t x0, y0, x1, y1;  // half-open
  std::int64_t w() const { return x1 - x0; }
  std::int64_t h() const { return y1 - y0; }
};

inline PixelRect to_pixel_rect(const BBox& b, const ThermalFrame& f) {
  PixelRect r;
  r.x0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(b.x1)), 0, f.width);
  r.y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(b.y1)), 0, f.height);
  r.x1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(b.x2)), r.x0, f.width);
  r.y1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(b.y2)), r.y0, f.height);
  return r;
}

/// Mean of a ring up to 4 px wide around the rect, excluding the rect itself.
/// Falls back to the frame mean when the ring is empty.
inline float ring_mean(const ThermalFrame& f, const PixelRect& r) {
  double sum = 0.0;
  std::int64_t count = 0;
  const std::int64_t x0 = std::max<std::int64_t>(0, r.x0 - 4);
  const std::int64_t y0 = std::max<std::int64_t>(0, r.y0 - 4);
  const std::int64_t x1 = std::min(f.width, r.x1 + 4);
  const std::int64_t y1 = std::min(f.height, r.y1 + 4);
  for (std::int64_t y = y0; y < y1; ++y)
    for (std::int64_t x = x0; x < x1; ++x) {
      if (y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1) continue;
      sum += f.at(y, x);
      ++count;
    }
  if (count == 0) {
    for (float v : f.pixels) sum += v;
    count = static_cast<std::int64_t>(f.pixels.size());
  }
  return static_cast<float>(sum / static_cast<double>(count));
}

/// Seeded occluder rectangle inside the upper half of a GT box, sized to
/// cover fraction f of (box area / 2) with roughly the box's aspect.
inline PixelRect occluder_rect(const PixelRect& box, double fraction, Rng& rng) {
  const std::int64_t half_h = std::max<std::int64_t>(1, box.h() / 2);
  const double target = fraction * static_cast<double>(box.w() * box.h()) * 0.5;
  std::int64_t rh = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::llround(
          std::sqrt(target * static_cast<double>(half_h) / std::max(1.0, double(box.w()))))),
      1, half_h);
  std::int64_t rw = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::llround(target / static_cast<double>(rh))), 1, box.w());
  PixelRect r;
  r.x0 = box.x0 + static_cast<std::int64_t>(rng.uniform_index(
                      static_cast<std::size_t>(box.w() - rw + 1)));
  r.y0 = box.y0 + static_cast<std::int64_t>(rng.uniform_index(
                      static_cast<std::size_t>(half_h - rh + 1)));
  r.x1 = r.x0 + rw;
  r.y1 = r.y0 + rh;
  return r;
}

}  // namespace detail

/// Boxes are never modified: occlusion-style artifacts simulate visibility
/// loss while labels remain, and hot-background artifacts add distractors.
inline ArtifactResult thermal_artifacts(const ThermalFrame& frame,
                                        const std::vector<LabeledBox>& boxes,
                                        ArtifactMode mode, Rng& rng,
                                        const ArtifactParams& params = {}) {
  ArtifactResult result{frame, true};
  ThermalFrame& f = result.frame;

  if (mode == ArtifactMode::temp_bias) {
    const int count = params.blob_count_min +
                      static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
                          params.blob_count_max - params.blob_count_min + 1)));
    for (int k = 0; k < count; ++k) {
      const std::int64_t cx =
          static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(f.width)));
      const std::int64_t cy =
          f.height / 2 + static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(
                             f.height - f.height / 2)));
      const double sigma = rng.uniform(params.blob_sigma_min, params.blob_sigma_max);
      const double peak = rng.uniform(params.blob_peak_min, params.blob_peak_max);
      const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
      const std::int64_t y0 = std::max<std::int64_t>(0, cy - radius);
      const std::int64_t y1 = std::min(f.height, cy + radius + 1);
      const std::int64_t x0 = std::max<std::int64_t>(0, cx - radius);
      const std::int64_t x1 = std::min(f.width, cx + radius + 1);
      for (std::int64_t y = y0; y < y1; ++y)
        for (std::int64_t x = x0; x < x1; ++x) {
          const double d2 = static_cast<double>((x - cx) * (x - cx) + (y - cy) * (y - cy));
          const double add = peak * std::exp(-d2 / (2.0 * sigma * sigma));
          f.at(y, x) = static_cast<float>(std::min(1.0, f.at(y, x) + add));
        }
    }
    return result;
  }

  if (mode == ArtifactMode::specular) {
    const int count = params.strip_count_min +
                      static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
                          params.strip_count_max - params.strip_count_min + 1)));
    const double angle_limit = params.strip_angle_limit_deg * std::acos(-1.0) / 180.0;
    for (int k = 0; k < count; ++k) {
      const double x0 = rng.uniform(0.0, static_cast<double>(f.width));
      const double y0 = rng.uniform(0.0, static_cast<double>(f.height));
      const double theta = rng.uniform(-angle_limit, angle_limit);
      const double width = rng.uniform(params.strip_width_min, params.strip_width_max);
      const double half_len = rng.uniform(0.15, 0.35) * static_cast<double>(f.width);
      const double intensity =
          rng.uniform(params.strip_intensity_min, params.strip_intensity_max);
      const double dx = std::cos(theta), dy = std::sin(theta);
      for (std::int64_t y = 0; y < f.height; ++y)
        for (std::int64_t x = 0; x < f.width; ++x) {
          const double rx = static_cast<double>(x) - x0;
          const double ry = static_cast<double>(y) - y0;
          const double along = rx * dx + ry * dy;
          const double across = std::abs(rx * dy - ry * dx);
          if (std::abs(along) <= half_len && across <= width * 0.5)
            f.at(y, x) = std::max(f.at(y, x), static_cast<float>(intensity));
        }
    }
    return result;
  }

  // cutout / cutmix need a GT box to occlude.
  if (boxes.empty()) {
    result.applied = false;
    return result;
  }
  const LabeledBox& target = boxes[rng.uniform_index(boxes.size())];
  const detail::PixelRect box = detail::to_pixel_rect(target.box, f);
  if (box.w() < 1 || box.h() < 1) {
    result.applied = false;
    return result;
  }
  const double fraction = rng.uniform(params.cut_fraction_min, params.cut_fraction_max);
  const detail::PixelRect r = detail::occluder_rect(box, fraction, rng);

  if (mode == ArtifactMode::cutout) {
    const float fill = detail::ring_mean(f, box);
    for (std::int64_t y = r.y0; y < r.y1; ++y)
      for (std::int64_t x = r.x0; x < r.x1; ++x) f.at(y, x) = fill;
  } else {
    const std::int64_t sx = static_cast<std::int64_t>(
        rng.uniform_index(static_cast<std::size_t>(f.width - r.w() + 1)));
    const std::int64_t sy = static_cast<std::int64_t>(
        rng.uniform_index(static_cast<std::size_t>(f.height - r.h() + 1)));
    std::vector<float> patch(static_cast<std::size_t>(r.w() * r.h()));
    for (std::int64_t y = 0; y < r.h(); ++y)
      for (std::int64_t x = 0; x < r.w(); ++x)
        patch[static_cast<std::size_t>(y * r.w() + x)] = frame.at(sy + y, sx + x);
    for (std::int64_t y = 0; y < r.h(); ++y)
      for (std::int64_t x = 0; x < r.w(); ++x)
        f.at(r.y0 + y, r.x0 + x) = patch[static_cast<std::size_t>(y * r.w() + x)];
  }
  return result;
}

inline ArtifactResult thermal_artifacts(const ThermalFrame& frame,
                                        const std::vector<LabeledBox>& boxes,
                                        ArtifactMode mode, std::uint64_t seed,
                                        const ArtifactParams& params = {}) {
  Rng rng(seed);
  return thermal_artifacts(frame, boxes, mode, rng, params);
}

enum class WeatherMode { fog, rain };

namespace detail {

/// Low-frequency haze: a seeded 4x4 grid upsampled bilinearly to frame size.
inline ThermalFrame haze_field(std::int64_t width, std::int64_t height, Rng& rng) {
  ThermalFrame grid = make_frame(4, 4);
  for (float& v : grid.pixels) v = static_cast<float>(rng.uniform(0.4, 0.6));
  return bilinear_resize(grid, width, height);
}

inline float local_mean_5x5(const ThermalFrame& f, std::int64_t cy, std::int64_t cx) {
  double sum = 0.0;
  int count = 0;
  for (std::int64_t y = std::max<std::int64_t>(0, cy - 2);
       y <= std::min(f.height - 1, cy + 2); ++y)
    for (std::int64_t x = std::max<std::int64_t>(0, cx - 2);
         x <= std::min(f.width - 1, cx + 2); ++x) {
      sum += f.at(y, x);
      ++count;
    }
  return static_cast<float>(sum / count);
}

}  // namespace detail

/// fog: out = (1 - a) x + a haze with a = intensity; rain: sparse seeded
/// streaks pulled toward their 5x5 local mean, scaled by intensity.
inline ThermalFrame fog_rain_overlay(const ThermalFrame& frame, WeatherMode mode,
                                     double intensity, Rng& rng) {
  if (!(intensity >= 0.0 && intensity <= 1.0))
    throw ValidationError("fog_rain_overlay: intensity must be in [0,1]");
  if (intensity == 0.0) return frame;
  if (mode == WeatherMode::fog) {
    const ThermalFrame haze = detail::haze_field(frame.width, frame.height, rng);
    ThermalFrame out = frame;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] = static_cast<float>(
          std::clamp((1.0 - intensity) * frame.pixels[i] + intensity * haze.pixels[i], 0.0, 1.0));
    return out;
  }
  ThermalFrame out = frame;
  const std::int64_t count = std::max<std::int64_t>(
      5, frame.width * frame.height / 400);
  for (std::int64_t k = 0; k < count; ++k) {
    const std::int64_t x0 =
        static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(frame.width)));
    const std::int64_t y0 =
        static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(frame.height)));
    const std::int64_t len = 4 + static_cast<std::int64_t>(rng.uniform_index(9));
    const double slant = rng.uniform(-0.18, 0.18);  // near-vertical streaks
    for (std::int64_t t = 0; t < len; ++t) {
      const std::int64_t y = y0 + t;
      const std::int64_t x =
          x0 + static_cast<std::int64_t>(std::llround(slant * static_cast<double>(t)));
      if (y < 0 || y >= frame.height || x < 0 || x >= frame.width) continue;
      const float mean = detail::local_mean_5x5(frame, y, x);
      const double v = frame.at(y, x);
      out.at(y, x) = static_cast<float>(
          std::clamp(mean + (v - mean) * (1.0 - intensity), 0.0, 1.0));
    }
  }
  return out;
}

inline ThermalFrame fog_rain_overlay(const ThermalFrame& frame, WeatherMode mode,
                                     double intensity, std::uint64_t seed) {
  Rng rng(seed);
  return fog_rain_overlay(frame, mode, intensity, rng);
}

/// Per-sample augmentation chain (everything except mosaic, which composes
/// four samples and is applied by the loader before this). Draw order is
/// fixed so equal seeds reproduce bitwise.
inline Sample augment_single(Sample sample, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  if (rng.uniform() < spec.hflip_p) sample = hflip_with_boxes(sample.frame, sample.boxes);
  if (spec.brightness_contrast_limit > 0.0) {
    const double b =
        rng.uniform(-spec.brightness_contrast_limit, spec.brightness_contrast_limit);
    const double c =
        rng.uniform(-spec.brightness_contrast_limit, spec.brightness_contrast_limit);
    sample.frame = brightness_contrast(sample.frame, b, c);
  }
  if (rng.uniform() < spec.temp_bias_p)
    sample.frame =
        thermal_artifacts(sample.frame, sample.boxes, ArtifactMode::temp_bias, rng).frame;
  if (rng.uniform() < spec.specular_p)
    sample.frame =
        thermal_artifacts(sample.frame, sample.boxes, ArtifactMode::specular, rng).frame;
  if (rng.uniform() < spec.cut_p) {
    const ArtifactMode cut =
        rng.uniform() < 0.5 ? ArtifactMode::cutout : ArtifactMode::cutmix;
    sample.frame = thermal_artifacts(sample.frame, sample.boxes, cut, rng).frame;
  }
  if (rng.uniform() < spec.fog_p)
    sample.frame =
        fog_rain_overlay(sample.frame, WeatherMode::fog, rng.uniform(0.2, 0.5), rng);
  if (rng.uniform() < spec.rain_p)
    sample.frame =
        fog_rain_overlay(sample.frame, WeatherMode::rain, rng.uniform(0.3, 0.8), rng);
  return sample;
}

}  // namespace ltv
