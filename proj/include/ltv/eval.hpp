#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ltv/box.hpp"
#include "ltv/errors.hpp"
#include "ltv/image.hpp"
#include "ltv/postprocess.hpp"

namespace ltv {

/// One detection's matching outcome, kept in descending-score order.
struct DetFlag {
  double score = 0.0;
  bool tp = false;
  int class_id = 0;
};

struct MatchResult {
  std::vector<DetFlag> det_flags;   // descending score
  std::vector<char> gt_matched;     // indexed like the input GT list
  std::int64_t tp_count = 0, fp_count = 0;
};

/// Greedy matching for one frame: walk detections by descending score and
/// claim the highest-IoU unmatched ground-truth box of the same class when
/// that IoU reaches the threshold. Each GT matches at most once.
inline MatchResult match(const std::vector<Detection>& dets,
                         const std::vector<LabeledBox>& gts, double iou_thresh = 0.5) {
  std::vector<Detection> sorted = dets;
  std::sort(sorted.begin(), sorted.end(), detail::nms_order);
  MatchResult result;
  result.gt_matched.assign(gts.size(), 0);
  result.det_flags.reserve(sorted.size());
  for (const Detection& d : sorted) {
    double best_iou = 0.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (result.gt_matched[g] || gts[g].class_id != d.class_id) continue;
      const double v = iou(d.bbox, gts[g].box);
      if (v > best_iou) {
        best_iou = v;
        best_g = g;
      }
    }
    const bool tp = best_g < gts.size() && best_iou >= iou_thresh;
    if (tp) {
      result.gt_matched[best_g] = 1;
      ++result.tp_count;
    } else {
      ++result.fp_count;
    }
    result.det_flags.push_back({d.score, tp, d.class_id});
  }
  return result;
}

struct PrPoint {
  double score = 0.0;  // threshold that produces this operating point
  double precision = 0.0;
  double recall = 0.0;
};

/// PR operating points at every distinct score threshold, highest first.
/// Detections with equal scores enter together, matching thresholding
/// semantics exactly.
inline std::vector<PrPoint> pr_curve(std::vector<DetFlag> flags, std::int64_t gt_count) {
  if (gt_count < 1) throw ValidationError("pr_curve: no ground truth for this class");
  std::stable_sort(flags.begin(), flags.end(),
                   [](const DetFlag& a, const DetFlag& b) { return a.score > b.score; });
  std::vector<PrPoint> points;
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i].tp)
      ++tp;
    else
      ++fp;
    const bool last_of_group = i + 1 == flags.size() || flags[i + 1].score != flags[i].score;
    if (!last_of_group) continue;
    PrPoint p;
    p.score = flags[i].score;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(gt_count);
    points.push_back(p);
  }
  return points;
}

/// All-point interpolated area under the PR curve: the precision envelope is
/// made monotone non-increasing and summed over recall increments.
inline double average_precision(const std::vector<DetFlag>& flags, std::int64_t gt_count) {
  const std::vector<PrPoint> points = pr_curve(flags, gt_count);
  double ap = 0.0;
  double envelope = 0.0;
  for (std::size_t i = points.size(); i-- > 0;) {
    envelope = std::max(envelope, points[i].precision);
    const double prev_recall = i == 0 ? 0.0 : points[i - 1].recall;
    ap += (points[i].recall - prev_recall) * envelope;
  }
  return ap;
}

struct DatasetEval {
  std::vector<std::optional<double>> per_class_ap;  // absent when class has no GT
  std::vector<std::int64_t> per_class_gt;
  std::vector<std::vector<PrPoint>> per_class_curve;
  std::vector<DetFlag> pooled_flags;  // all classes, for threshold calibration
  std::int64_t total_gt = 0;
  double map50 = 0.0;
  std::vector<std::string> warnings;
};

/// Matches every frame, accumulates per-class flags across the dataset, and
/// reduces to AP per class and mAP@0.5. Classes without any ground truth are
/// excluded from the mean with a warning.
inline DatasetEval evaluate(const std::vector<std::vector<Detection>>& dets_per_frame,
                            const std::vector<std::vector<LabeledBox>>& gts_per_frame,
                            int num_classes, double iou_thresh = 0.5) {
  if (num_classes < 1) throw ValidationError("evaluate: need at least one class");
  if (dets_per_frame.size() != gts_per_frame.size())
    throw ShapeError("evaluate: detection and ground-truth frame counts differ");
  std::vector<std::vector<DetFlag>> class_flags(static_cast<std::size_t>(num_classes));
  std::vector<std::int64_t> class_gt(static_cast<std::size_t>(num_classes), 0);
  DatasetEval out;
  for (std::size_t f = 0; f < dets_per_frame.size(); ++f) {
    for (const LabeledBox& g : gts_per_frame[f]) {
      if (g.class_id < 0 || g.class_id >= num_classes)
        throw ValidationError("evaluate: ground-truth class out of range");
      ++class_gt[static_cast<std::size_t>(g.class_id)];
    }
    const MatchResult m = match(dets_per_frame[f], gts_per_frame[f], iou_thresh);
    for (const DetFlag& flag : m.det_flags) {
      if (flag.class_id < 0 || flag.class_id >= num_classes)
        throw ValidationError("evaluate: detection class out of range");
      class_flags[static_cast<std::size_t>(flag.class_id)].push_back(flag);
      out.pooled_flags.push_back(flag);
    }
  }
  out.per_class_ap.resize(static_cast<std::size_t>(num_classes));
  out.per_class_gt = class_gt;
  out.per_class_curve.resize(static_cast<std::size_t>(num_classes));
  double ap_sum = 0.0;
  int included = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    out.total_gt += class_gt[uc];
    if (class_gt[uc] == 0) {
      out.warnings.push_back("class " + std::to_string(c) +
                             " has no ground truth; excluded from mAP");
      continue;
    }
    out.per_class_curve[uc] = pr_curve(class_flags[uc], class_gt[uc]);
    const double ap = average_precision(class_flags[uc], class_gt[uc]);
    out.per_class_ap[uc] = ap;
    ap_sum += ap;
    ++included;
  }
  if (included == 0) throw ValidationError("evaluate: no class has ground truth");
  out.map50 = ap_sum / static_cast<double>(included);
  return out;
}

inline double map_at_50(const std::vector<std::optional<double>>& per_class_ap) {
  double sum = 0.0;
  int n = 0;
  for (const auto& ap : per_class_ap)
    if (ap.has_value()) {
      sum += *ap;
      ++n;
    }
  if (n == 0) throw ValidationError("map_at_50: no class APs available");
  return sum / static_cast<double>(n);
}

/// F1-optimal confidence threshold over the pooled detections. Candidate
/// thresholds are the distinct detection scores; ties break toward the lower
/// threshold (fewer misses).
inline double calibrate_threshold(std::vector<DetFlag> flags, std::int64_t total_gt) {
  if (total_gt < 1) throw ValidationError("calibrate_threshold: no ground truth");
  if (flags.empty()) return 0.5;  // nothing to calibrate on; keep the default
  std::stable_sort(flags.begin(), flags.end(),
                   [](const DetFlag& a, const DetFlag& b) { return a.score > b.score; });
  double best_tau = flags.front().score;
  double best_f1 = -1.0;
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i].tp)
      ++tp;
    else
      ++fp;
    const bool last_of_group = i + 1 == flags.size() || flags[i + 1].score != flags[i].score;
    if (!last_of_group) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_gt);
    const double f1 =
        precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    if (f1 >= best_f1) {  // >= walks toward lower thresholds on ties
      best_f1 = f1;
      best_tau = flags[i].score;
    }
  }
  return best_tau;
}

struct FrameSeriesPoint {
  std::string frame_id;
  std::int64_t count = 0;
  std::optional<double> mean_conf;  // absent when the frame has no detections
  std::optional<double> max_conf;
};

inline std::vector<FrameSeriesPoint> confidence_timeseries(
    const std::vector<FrameDetections>& frames) {
  std::vector<FrameSeriesPoint> series;
  series.reserve(frames.size());
  for (const FrameDetections& f : frames) {
    FrameSeriesPoint p;
    p.frame_id = f.frame_id;
    p.count = static_cast<std::int64_t>(f.dets.size());
    if (!f.dets.empty()) {
      double sum = 0.0, mx = 0.0;
      for (const Detection& d : f.dets) {
        sum += d.score;
        mx = std::max(mx, d.score);
      }
      p.mean_conf = sum / static_cast<double>(f.dets.size());
      p.max_conf = mx;
    }
    series.push_back(p);
  }
  return series;
}

struct PairedFramePoint {
  std::string frame_id;
  FrameSeriesPoint a, b;
  std::optional<double> delta_mean;  // absent unless both runs saw detections
  std::int64_t delta_count = 0;
};

/// Frame-by-frame deltas between two runs over the same sequence, e.g. the
/// native and downsized resolutions.
inline std::vector<PairedFramePoint> paired_timeseries(
    const std::vector<FrameSeriesPoint>& a, const std::vector<FrameSeriesPoint>& b) {
  if (a.size() != b.size())
    throw ValidationError("paired_timeseries: runs cover different frame counts");
  std::vector<PairedFramePoint> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    PairedFramePoint p;
    p.frame_id = a[i].frame_id;
    p.a = a[i];
    p.b = b[i];
    if (a[i].mean_conf && b[i].mean_conf) p.delta_mean = *b[i].mean_conf - *a[i].mean_conf;
    p.delta_count = b[i].count - a[i].count;
    out.push_back(p);
  }
  return out;
}

struct FpsReport {
  double mean_fps = 0.0;
  double p50_ms = 0.0, p99_ms = 0.0;
  std::int64_t frames_timed = 0;
  double total_seconds = 0.0;
};

/// Wall-clock timing of a full per-frame pipeline. The first `warmup` frames
/// run but are excluded; the mean is over exactly frames - warmup samples.
template <typename Pipeline>
FpsReport fps_bench(Pipeline&& pipeline, const std::vector<ThermalFrame>& frames,
                    std::int64_t warmup) {
  if (warmup < 0) throw ValidationError("fps_bench: negative warmup");
  if (frames.empty()) throw ValidationError("fps_bench: no frames to time");
  if (static_cast<std::int64_t>(frames.size()) < warmup + 10)
    throw ValidationError("fps_bench: need at least warmup + 10 frames");
  using clock = std::chrono::steady_clock;
  std::vector<double> latencies_ms;
  latencies_ms.reserve(frames.size() - static_cast<std::size_t>(warmup));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto t0 = clock::now();
    pipeline(frames[i]);
    const auto t1 = clock::now();
    if (static_cast<std::int64_t>(i) < warmup) continue;
    latencies_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  FpsReport report;
  report.frames_timed = static_cast<std::int64_t>(latencies_ms.size());
  double total_ms = 0.0;
  for (double v : latencies_ms) total_ms += v;
  report.total_seconds = total_ms / 1000.0;
  report.mean_fps = report.total_seconds > 0.0
                        ? static_cast<double>(report.frames_timed) / report.total_seconds
                        : 0.0;
  std::sort(latencies_ms.begin(), latencies_ms.end());
  const auto rank = [&](double q) {
    const auto n = static_cast<double>(latencies_ms.size());
    const auto idx = static_cast<std::size_t>(std::min(
        n - 1.0, std::max(0.0, std::ceil(q * n) - 1.0)));
    return latencies_ms[idx];
  };
  report.p50_ms = rank(0.50);
  report.p99_ms = rank(0.99);
  return report;
}

/// Mean false positives per frame on a tagged split (e.g. hot-bg), using the
/// standard matcher at IoU 0.5.
inline double hot_bg_fp_rate(const std::vector<std::vector<Detection>>& dets_per_frame,
                             const std::vector<std::vector<LabeledBox>>& gts_per_frame,
                             double iou_thresh = 0.5) {
  if (dets_per_frame.empty())
    throw ValidationError("hot_bg_fp_rate: no frames carry the requested tag");
  if (dets_per_frame.size() != gts_per_frame.size())
    throw ShapeError("hot_bg_fp_rate: detection and ground-truth frame counts differ");
  std::int64_t fp = 0;
  for (std::size_t f = 0; f < dets_per_frame.size(); ++f)
    fp += match(dets_per_frame[f], gts_per_frame[f], iou_thresh).fp_count;
  return static_cast<double>(fp) / static_cast<double>(dets_per_frame.size());
}

inline void write_pr_curve_csv(const DatasetEval& eval, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_pr_curve_csv: cannot open " + path);
  out << "class_id,score,precision,recall\n";
  for (std::size_t c = 0; c < eval.per_class_curve.size(); ++c)
    for (const PrPoint& p : eval.per_class_curve[c])
      out << c << ',' << format_fixed(p.score) << ',' << format_fixed(p.precision) << ','
          << format_fixed(p.recall) << '\n';
  if (!out) throw IoError("write_pr_curve_csv: short write to " + path);
}

inline void write_timeseries_csv(const std::vector<FrameSeriesPoint>& series,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_timeseries_csv: cannot open " + path);
  out << "frame,frame_id,count,mean_conf,max_conf\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const FrameSeriesPoint& p = series[i];
    out << i << ',' << p.frame_id << ',' << p.count << ','
        << (p.mean_conf ? format_fixed(*p.mean_conf) : std::string()) << ','
        << (p.max_conf ? format_fixed(*p.max_conf) : std::string()) << '\n';
  }
  if (!out) throw IoError("write_timeseries_csv: short write to " + path);
}

inline void write_paired_timeseries_csv(const std::vector<PairedFramePoint>& series,
                                        const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_paired_timeseries_csv: cannot open " + path);
  out << "frame,frame_id,count_a,mean_a,count_b,mean_b,delta_mean,delta_count\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const PairedFramePoint& p = series[i];
    out << i << ',' << p.frame_id << ',' << p.a.count << ','
        << (p.a.mean_conf ? format_fixed(*p.a.mean_conf) : std::string()) << ',' << p.b.count
        << ',' << (p.b.mean_conf ? format_fixed(*p.b.mean_conf) : std::string()) << ','
        << (p.delta_mean ? format_fixed(*p.delta_mean) : std::string()) << ','
        << p.delta_count << '\n';
  }
  if (!out) throw IoError("write_paired_timeseries_csv: short write to " + path);
}

/// Generic `metric,value` rows; values are pre-formatted strings so callers
/// control numeric formatting.
inline void write_summary_csv(const std::vector<std::pair<std::string, std::string>>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_summary_csv: cannot open " + path);
  out << "metric,value\n";
  for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
  if (!out) throw IoError("write_summary_csv: short write to " + path);
}

}  // namespace ltv
