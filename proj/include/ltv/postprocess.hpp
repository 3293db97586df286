#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ltv/box.hpp"
#include "ltv/errors.hpp"
#include "ltv/image.hpp"
#include "ltv/model.hpp"

namespace ltv {

struct Detection {
  BBox bbox;  // original-frame pixels
  double score = 0.0;
  int class_id = 0;
  int level = 0;
};

/// Decodes every cell of every pyramid level into a candidate detection:
///   cx = (j + sigmoid(tx)) * s, cy = (i + sigmoid(ty)) * s,
///   w = s * exp(clamp(tw)), h = s * exp(clamp(th)),
///   score = sigmoid(obj) * max_k sigmoid(class_k),
/// then maps coordinates through the pad record into the original frame and
/// clips. Boxes with no area left after clipping are dropped.
template <typename T>
std::vector<Detection> decode(const RawPredictions<T>& preds, const ModelConfig& cfg,
                              const PadRecord& record) {
  cfg.validate();
  if (preds.size() != cfg.strides.size())
    throw ShapeError("decode: prediction level count does not match config");
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k].c() != cfg.head_channels())
      throw ShapeError("decode: level " + std::to_string(k) + " has " +
                       std::to_string(preds[k].c()) + " channels, expected " +
                       std::to_string(cfg.head_channels()));
    const std::int64_t s = cfg.strides[k];
    if (preds[k].h() * s != record.padded_h || preds[k].w() * s != record.padded_w)
      throw ValidationError("decode: pad record does not match prediction grid at level " +
                            std::to_string(k) + "; coordinates would be wrong");
  }
  if (preds[0].n() != 1) throw ShapeError("decode: expected a single-frame batch");

  std::vector<Detection> out;
  const double clamp_limit = cfg.head_box_clamp;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const Tensor<T>& p = preds[k];
    const double s = static_cast<double>(cfg.strides[k]);
    for (std::int64_t i = 0; i < p.h(); ++i)
      for (std::int64_t j = 0; j < p.w(); ++j) {
        const double obj = sigmoid(static_cast<double>(p.at(0, 4, i, j)));
        double best_cls = 0.0;
        int best_k = 0;
        for (std::int64_t c = 0; c < cfg.num_classes; ++c) {
          const double pc = sigmoid(static_cast<double>(p.at(0, 5 + c, i, j)));
          if (pc > best_cls) {
            best_cls = pc;
            best_k = static_cast<int>(c);
          }
        }
        double cx, cy, w, h;
        decode_cell(static_cast<double>(p.at(0, 0, i, j)),
                    static_cast<double>(p.at(0, 1, i, j)),
                    static_cast<double>(p.at(0, 2, i, j)),
                    static_cast<double>(p.at(0, 3, i, j)), i, j, s, clamp_limit, &cx, &cy, &w,
                    &h);
        Detection det;
        det.bbox = record.to_original(BBox::from_center(cx, cy, w, h));
        if (det.bbox.width() <= 0.0 || det.bbox.height() <= 0.0) continue;
        det.score = obj * best_cls;
        det.class_id = best_k;
        det.level = static_cast<int>(k);
        out.push_back(det);
      }
  }
  return out;
}

/// Keeps detections with score >= tau, ordered by descending score; equal
/// scores keep their input order.
inline std::vector<Detection> threshold_filter(const std::vector<Detection>& dets,
                                               double tau = 0.5) {
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets)
    if (d.score >= tau) out.push_back(d);
  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

namespace detail {

inline bool nms_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.bbox.x1 != b.bbox.x1) return a.bbox.x1 < b.bbox.x1;
  return a.bbox.y1 < b.bbox.y1;
}

}  // namespace detail

/// Greedy per-class suppression: repeatedly keep the highest-score detection
/// and drop same-class detections with IoU above the threshold. Ties break by
/// (score desc, x1 asc, y1 asc) so independent implementations agree exactly.
inline std::vector<Detection> nms(const std::vector<Detection>& dets,
                                  double iou_thresh = 0.5) {
  std::vector<Detection> sorted = dets;
  std::sort(sorted.begin(), sorted.end(), detail::nms_order);
  std::vector<Detection> kept;
  std::vector<char> suppressed(sorted.size(), 0);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(sorted[i]);
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      if (suppressed[j] || sorted[j].class_id != sorted[i].class_id) continue;
      if (iou(sorted[i].bbox, sorted[j].bbox) > iou_thresh) suppressed[j] = 1;
    }
  }
  return kept;
}

/// 6-decimal fixed formatting shared by every CSV the tools emit, so reruns
/// diff byte-for-byte.
inline std::string format_fixed(double v, int decimals = 6) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

inline std::string detection_csv_header() {
  return "frame_id,class_id,score,x1,y1,x2,y2";
}

inline std::string detection_csv_row(const std::string& frame_id, const Detection& d) {
  std::ostringstream os;
  os << frame_id << ',' << d.class_id << ',' << format_fixed(d.score) << ','
     << format_fixed(d.bbox.x1) << ',' << format_fixed(d.bbox.y1) << ','
     << format_fixed(d.bbox.x2) << ',' << format_fixed(d.bbox.y2);
  return os.str();
}

struct FrameDetections {
  std::string frame_id;
  std::vector<Detection> dets;
};

inline void write_detections_csv(const std::vector<FrameDetections>& frames,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_detections_csv: cannot open " + path);
  out << detection_csv_header() << '\n';
  for (const FrameDetections& f : frames)
    for (const Detection& d : f.dets) out << detection_csv_row(f.frame_id, d) << '\n';
  if (!out) throw IoError("write_detections_csv: short write to " + path);
}

/// Reads a detection CSV back. Consecutive rows with the same frame_id form
/// one frame; frames with no detections have no rows, so callers that need
/// them must align against their own frame list.
inline std::vector<FrameDetections> read_detections_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_detections_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty detection file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != detection_csv_header())
    throw FormatError(path + ":1: expected header '" + detection_csv_header() + "'");

  const auto number = [&](const std::string& field, std::size_t line_no) {
    std::size_t consumed = 0;
    double v = 0.0;
    try {
      v = std::stod(field, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != field.size() || field.empty())
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected number, got '" +
                        field + "'");
    return v;
  };

  std::vector<FrameDetections> frames;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(line);
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (fields.size() != 7)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 7 fields, got " +
                        std::to_string(fields.size()));
    Detection d;
    const double cls = number(fields[1], line_no);
    if (cls != std::floor(cls) || cls < 0)
      throw FormatError(path + ":" + std::to_string(line_no) + ": bad class id '" +
                        fields[1] + "'");
    d.class_id = static_cast<int>(cls);
    d.score = number(fields[2], line_no);
    d.bbox = {number(fields[3], line_no), number(fields[4], line_no),
              number(fields[5], line_no), number(fields[6], line_no)};
    if (frames.empty() || frames.back().frame_id != fields[0])
      frames.push_back({fields[0], {}});
    frames.back().dets.push_back(d);
  }
  return frames;
}

}  // namespace ltv
