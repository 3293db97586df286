#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ltv/box.hpp"
#include "ltv/errors.hpp"
#include "ltv/tensor.hpp"

namespace ltv {

/// Single-channel frame with pixels normalized to [0,1].
struct ThermalFrame {
  std::int64_t width = 0, height = 0;
  std::vector<float> pixels;
  std::optional<double> timestamp;
  std::string source_id;

  float at(std::int64_t y, std::int64_t x) const {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }
  float& at(std::int64_t y, std::int64_t x) {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }

  void validate() const {
    if (width < 1 || height < 1) throw ValidationError("frame: non-positive dimensions");
    if (pixels.size() != static_cast<std::size_t>(width * height))
      throw ValidationError("frame: pixel count does not match dimensions");
    for (float v : pixels)
      if (!(v >= 0.0f && v <= 1.0f))
        throw ValidationError("frame: pixel outside [0,1] in " + source_id);
  }
};

inline ThermalFrame make_frame(std::int64_t width, std::int64_t height, float fill = 0.0f) {
  if (width < 1 || height < 1) throw ValidationError("make_frame: non-positive dimensions");
  ThermalFrame f;
  f.width = width;
  f.height = height;
  f.pixels.assign(static_cast<std::size_t>(width * height), fill);
  return f;
}

enum class NormalizeMode {
  auto_mode,   // 8-bit: full range; 16-bit: per-frame min-max
  full_range,  // value / maxval
  minmax       // (value - min) / (max - min), constant frames become 0
};

namespace detail {

inline int pgm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header fields.
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in || value < 0) throw FormatError(path + ": malformed PGM header");
  return value;
}

}  // namespace detail

/// Binary PGM (P5), 8-bit or 16-bit big-endian per the format.
inline ThermalFrame read_pgm(const std::string& path,
                             NormalizeMode mode = NormalizeMode::auto_mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5") throw FormatError(path + ": not a binary PGM (P5)");
  const std::int64_t width = detail::pgm_token(in, path);
  const std::int64_t height = detail::pgm_token(in, path);
  const std::int64_t maxval = detail::pgm_token(in, path);
  if (width < 1 || height < 1) throw FormatError(path + ": non-positive dimensions");
  if (maxval < 1 || maxval > 65535) throw FormatError(path + ": maxval out of range");
  in.get();  // single whitespace after maxval

  const bool wide = maxval > 255;
  const std::size_t count = static_cast<std::size_t>(width * height);
  std::vector<std::uint16_t> raw(count);
  if (wide) {
    std::vector<unsigned char> bytes(count * 2);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
      throw FormatError(path + ": truncated pixel payload");
    for (std::size_t i = 0; i < count; ++i)
      raw[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  } else {
    std::vector<unsigned char> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
      throw FormatError(path + ": truncated pixel payload");
    for (std::size_t i = 0; i < count; ++i) raw[i] = bytes[i];
  }

  if (mode == NormalizeMode::auto_mode)
    mode = wide ? NormalizeMode::minmax : NormalizeMode::full_range;
  ThermalFrame f = make_frame(width, height);
  f.source_id = std::filesystem::path(path).filename().string();
  if (mode == NormalizeMode::full_range) {
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t i = 0; i < count; ++i) f.pixels[i] = static_cast<float>(raw[i]) * scale;
  } else {
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi > lo) {
      const double scale = 1.0 / (hi - lo);
      for (std::size_t i = 0; i < count; ++i)
        f.pixels[i] = static_cast<float>((raw[i] - lo) * scale);
    }
  }
  return f;
}

inline void write_pgm(const ThermalFrame& frame, const std::string& path, int bits = 8) {
  frame.validate();
  if (bits != 8 && bits != 16) throw ValidationError("write_pgm: bits must be 8 or 16");
  const std::int64_t maxval = bits == 8 ? 255 : 65535;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << frame.width << " " << frame.height << "\n" << maxval << "\n";
  for (float v : frame.pixels) {
    const long q = std::lround(static_cast<double>(std::clamp(v, 0.0f, 1.0f)) * maxval);
    if (bits == 8) {
      out.put(static_cast<char>(q));
    } else {
      out.put(static_cast<char>((q >> 8) & 0xff));
      out.put(static_cast<char>(q & 0xff));
    }
  }
  if (!out) throw IoError("write_pgm: short write to " + path);
}

/// Lossless f32 dump for golden-vector fixtures: "LTVF", u32 width,
/// u32 height, then row-major little-endian f32 pixels.
inline void write_raw_f32(const ThermalFrame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_raw_f32: cannot open " + path);
  out.write("LTVF", 4);
  const std::uint32_t w = static_cast<std::uint32_t>(frame.width);
  const std::uint32_t h = static_cast<std::uint32_t>(frame.height);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(frame.pixels.data()),
            static_cast<std::streamsize>(frame.pixels.size() * 4));
  if (!out) throw IoError("write_raw_f32: short write to " + path);
}

inline ThermalFrame read_raw_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_raw_f32: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "LTVF")
    throw FormatError(path + ": bad raw-f32 magic");
  std::uint32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || w == 0 || h == 0) throw FormatError(path + ": bad raw-f32 header");
  ThermalFrame f = make_frame(w, h);
  in.read(reinterpret_cast<char*>(f.pixels.data()),
          static_cast<std::streamsize>(f.pixels.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != f.pixels.size() * 4)
    throw FormatError(path + ": truncated raw-f32 payload");
  return f;
}

/// Half-pixel-center bilinear resampling: source x = (dst + 0.5) * scale - 0.5,
/// clamped to the valid range before interpolation.
inline ThermalFrame bilinear_resize(const ThermalFrame& src, std::int64_t target_w,
                                    std::int64_t target_h) {
  if (target_w < 1 || target_h < 1)
    throw ValidationError("bilinear_resize: target dims must be >= 1");
  ThermalFrame out = make_frame(target_w, target_h);
  out.timestamp = src.timestamp;
  out.source_id = src.source_id;
  const double sx = static_cast<double>(src.width) / static_cast<double>(target_w);
  const double sy = static_cast<double>(src.height) / static_cast<double>(target_h);
  for (std::int64_t y = 0; y < target_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(fy);
    const std::int64_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < target_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const std::int64_t x0 = static_cast<std::int64_t>(fx);
      const std::int64_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * src.at(y0, x0) + wx * src.at(y0, x1);
      const double bot = (1.0 - wx) * src.at(y1, x0) + wx * src.at(y1, x1);
      out.at(y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

/// Geometry bookkeeping from original frame through resize and letterbox;
/// inverts detection coordinates back to the original frame.
struct PadRecord {
  std::int64_t orig_w = 0, orig_h = 0;        // native frame
  std::int64_t content_w = 0, content_h = 0;  // after resize, before padding
  std::int64_t padded_w = 0, padded_h = 0;    // network input
  std::int64_t pad_right = 0, pad_bottom = 0;

  double scale_x() const {
    return static_cast<double>(orig_w) / static_cast<double>(content_w);
  }
  double scale_y() const {
    return static_cast<double>(orig_h) / static_cast<double>(content_h);
  }

  /// Padded-image box -> original-frame box, clipped to the frame.
  BBox to_original(const BBox& b) const {
    BBox out{b.x1 * scale_x(), b.y1 * scale_y(), b.x2 * scale_x(), b.y2 * scale_y()};
    out.x1 = std::clamp(out.x1, 0.0, static_cast<double>(orig_w));
    out.x2 = std::clamp(out.x2, 0.0, static_cast<double>(orig_w));
    out.y1 = std::clamp(out.y1, 0.0, static_cast<double>(orig_h));
    out.y2 = std::clamp(out.y2, 0.0, static_cast<double>(orig_h));
    return out;
  }
};

/// Pads right/bottom with edge replication until both dims are multiples of
/// `stride_multiple`. Box coordinates are absolute pixels and unchanged.
inline ThermalFrame letterbox_to_stride(const ThermalFrame& src, std::int64_t stride_multiple,
                                        PadRecord* record = nullptr) {
  if (stride_multiple < 1) throw ValidationError("letterbox: stride multiple must be >= 1");
  const auto round_up = [&](std::int64_t v) {
    return ((v + stride_multiple - 1) / stride_multiple) * stride_multiple;
  };
  const std::int64_t out_w = round_up(src.width);
  const std::int64_t out_h = round_up(src.height);
  if (record) {
    record->content_w = src.width;
    record->content_h = src.height;
    record->padded_w = out_w;
    record->padded_h = out_h;
    record->pad_right = out_w - src.width;
    record->pad_bottom = out_h - src.height;
  }
  if (out_w == src.width && out_h == src.height) return src;
  ThermalFrame out = make_frame(out_w, out_h);
  out.timestamp = src.timestamp;
  out.source_id = src.source_id;
  for (std::int64_t y = 0; y < out_h; ++y) {
    const std::int64_t sy = std::min(y, src.height - 1);
    for (std::int64_t x = 0; x < out_w; ++x)
      out.at(y, x) = src.at(sy, std::min(x, src.width - 1));
  }
  return out;
}

/// Box coordinates are absolute pixels, so right/bottom padding leaves them
/// untouched; the overload exists to keep the pass-through explicit.
template <typename Boxes>
inline std::pair<ThermalFrame, Boxes> letterbox_to_stride(const ThermalFrame& src,
                                                          const Boxes& boxes,
                                                          std::int64_t stride_multiple,
                                                          PadRecord* record = nullptr) {
  return {letterbox_to_stride(src, stride_multiple, record), boxes};
}

inline TensorF frame_to_tensor(const ThermalFrame& frame) {
  TensorF t(1, 1, frame.height, frame.width);
  std::copy(frame.pixels.begin(), frame.pixels.end(), t.data.begin());
  return t;
}

inline ThermalFrame tensor_to_frame(const TensorF& t, std::int64_t n = 0) {
  ThermalFrame f = make_frame(t.w(), t.h());
  const float* p = t.plane(n, 0);
  std::copy(p, p + f.pixels.size(), f.pixels.begin());
  return f;
}

/// Resize + letterbox in one step; the PadRecord inverts detections.
inline ThermalFrame prepare_frame(const ThermalFrame& src, std::int64_t target_w,
                                  std::int64_t target_h, std::int64_t stride_multiple,
                                  PadRecord* record) {
  ThermalFrame resized =
      (src.width == target_w && src.height == target_h)
          ? src
          : bilinear_resize(src, target_w, target_h);
  ThermalFrame padded = letterbox_to_stride(resized, stride_multiple, record);
  if (record) {
    record->orig_w = src.width;
    record->orig_h = src.height;
  }
  return padded;
}

}  // namespace ltv
