#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ltv/augment.hpp"
#include "ltv/config.hpp"
#include "ltv/dataset.hpp"
#include "ltv/eval.hpp"
#include "ltv/image.hpp"
#include "ltv/model.hpp"
#include "ltv/postprocess.hpp"
#include "ltv/train.hpp"
#include "ltv/weights.hpp"

namespace {

using namespace ltv;
namespace fs = std::filesystem;

/// Worker cap from LTV_THREADS. The engine is serial, so the effective count
/// is min(cap, 1); the env var is still validated so typos fail loudly.
std::int64_t thread_cap() {
  const char* env = std::getenv("LTV_THREADS");
  if (!env) return 1;
  std::string text(env);
  std::size_t consumed = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &consumed);
  } catch (const std::exception&) {
    consumed = 0;
  }
  if (consumed != text.size() || v < 1)
    throw ConfigError("LTV_THREADS must be a positive integer, got '" + text + "'");
  return std::min<std::int64_t>(v, 1);
}

std::pair<std::int64_t, std::int64_t> parse_size(const std::string& text) {
  const auto sep = text.find_first_of("xX");
  const auto parse_side = [&](const std::string& part) -> std::int64_t {
    std::size_t consumed = 0;
    long long v = 0;
    try {
      v = std::stoll(part, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != part.size() || part.empty() || v < 1) return -1;
    return v;
  };
  if (sep != std::string::npos) {
    const std::int64_t w = parse_side(text.substr(0, sep));
    const std::int64_t h = parse_side(text.substr(sep + 1));
    if (w > 0 && h > 0) return {w, h};
  }
  throw ConfigError("expected a size like 640x512, got '" + text + "'");
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream text;
    text << in.rdbuf();
    cfg = parse_config(text.str());
  }
  for (const std::string& assignment : sets) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + assignment + "'");
    apply_config_key(cfg, detail::trim(assignment.substr(0, eq)),
                     detail::trim(assignment.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

/// detect/bench read the model shape from an explicit --config, else from the
/// sidecar written next to the checkpoint, else library defaults.
RunConfig config_for_weights(const std::string& weights, const std::string& config_path,
                             const std::vector<std::string>& sets) {
  std::string path = config_path;
  if (path.empty() && fs::exists(weights + ".cfg")) path = weights + ".cfg";
  return resolve_config(path, sets);
}

fs::path ensure_outdir(const std::string& out, bool force) {
  if (out.empty()) throw ConfigError("an output directory is required (--out)");
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
  if (!fs::is_directory(dir)) throw IoError("output path '" + out + "' is not a directory");
  if (!force && !fs::is_empty(dir))
    throw ConfigError("output directory '" + out + "' is not empty; pass --force to reuse it");
  return dir;
}

std::map<std::string, std::string> config_kv(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  std::istringstream lines(serialize_config(cfg));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  kv["threads"] = std::to_string(thread_cap());
  return kv;
}

void write_run_record(const fs::path& dir, const std::map<std::string, std::string>& kv) {
  const fs::path path = dir / "run.txt";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

std::vector<std::string> class_names_for(std::int64_t n) {
  if (n == 2) return {"child", "adult"};
  std::vector<std::string> names;
  for (std::int64_t i = 0; i < n; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

std::vector<LoadedSample> load_all_samples(const DatasetManifest& manifest) {
  std::vector<LoadedSample> samples;
  std::vector<std::string> warnings;
  samples.reserve(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    samples.push_back(load_sample(manifest, i, &warnings));
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  return samples;
}

template <typename T>
void load_weights_checked(Model<T>& model, const std::string& path) {
  try {
    load_model(model, path);
  } catch (const Error& e) {
    throw ConfigError("weights '" + path + "': " + e.what());
  }
}

void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("--tau must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, input = "160x128", folds_dir;
  std::vector<std::string> sets;
  int fold = -1, num_folds = 10;
  std::int64_t checkpoint_every = 0;
  bool force = false;
};

void cmd_train(const TrainArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.sets);
  const auto [in_w, in_h] = parse_size(a.input);
  const fs::path out = ensure_outdir(a.out, a.force);
  const DatasetManifest manifest =
      load_manifest(a.data, class_names_for(cfg.model.num_classes));
  const std::vector<LoadedSample> samples = load_all_samples(manifest);

  std::vector<std::size_t> train_idx, held_idx;
  if (a.fold >= 0) {
    if (a.folds_dir.empty()) throw ConfigError("--fold requires --folds-dir");
    if (a.fold >= a.num_folds)
      throw ConfigError("--fold must be below --num-folds (" + std::to_string(a.num_folds) +
                        ")");
    const FoldSplit split = load_folds(a.folds_dir, a.num_folds, manifest);
    const auto& held = split.folds[static_cast<std::size_t>(a.fold)];
    const std::set<std::string> held_ids(held.begin(), held.end());
    for (std::size_t i = 0; i < samples.size(); ++i)
      (held_ids.count(samples[i].image_id) ? held_idx : train_idx).push_back(i);
    if (train_idx.empty()) throw ValidationError("fold selection leaves no training images");
  } else {
    // No fold requested: train on everything and report training-set metrics.
    for (std::size_t i = 0; i < samples.size(); ++i) train_idx.push_back(i);
    held_idx = train_idx;
  }

  std::vector<TrainSample> train_set;
  train_set.reserve(train_idx.size());
  for (std::size_t i : train_idx) train_set.push_back({samples[i].frame, samples[i].boxes});

  Model<float> model(cfg.model);
  model.init(cfg.train.seed);
  TrainOptions opts;
  opts.input_w = in_w;
  opts.input_h = in_h;
  opts.checkpoint_dir = out;
  opts.checkpoint_every = a.checkpoint_every;
  opts.progress = &std::cerr;
  const TrainResult result = train(train_set, model, cfg.train, cfg.loss, cfg.aug, opts);
  write_epoch_log(result.log, (out / "epochs.csv").string());

  auto kv = config_kv(cfg);
  kv["command"] = "train";
  kv["data"] = a.data;
  kv["input"] = std::to_string(in_w) + "x" + std::to_string(in_h);
  kv["fold"] = std::to_string(a.fold);
  kv["train_images"] = std::to_string(train_idx.size());
  write_run_record(out, kv);
  if (result.aborted) throw NumericError(result.abort_reason);

  std::vector<std::vector<Detection>> dets_per_frame;
  std::vector<std::vector<LabeledBox>> gts_per_frame;
  for (std::size_t i : held_idx) {
    dets_per_frame.push_back(detect_frame(model, samples[i].frame, in_w, in_h, 1e-3));
    gts_per_frame.push_back(samples[i].corners);
  }
  const DatasetEval ev =
      evaluate(dets_per_frame, gts_per_frame, static_cast<int>(cfg.model.num_classes));
  for (const std::string& w : ev.warnings) std::cerr << "warning: " << w << "\n";
  write_pr_curve_csv(ev, (out / "pr_curve.csv").string());

  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("map50", format_fixed(ev.map50));
  const auto names = class_names_for(cfg.model.num_classes);
  for (std::size_t c = 0; c < ev.per_class_ap.size(); ++c)
    rows.emplace_back("ap_" + names[c],
                      ev.per_class_ap[c] ? format_fixed(*ev.per_class_ap[c]) : "");
  rows.emplace_back("total_gt", std::to_string(ev.total_gt));
  rows.emplace_back("calibrated_tau",
                    format_fixed(calibrate_threshold(ev.pooled_flags, ev.total_gt)));
  rows.emplace_back("epochs_run", std::to_string(result.log.size()));
  rows.emplace_back("final_loss",
                    result.log.empty() ? "" : format_fixed(result.log.back().total));
  write_summary_csv(rows, (out / "summary.csv").string());
  std::cout << "trained " << result.log.size() << " epochs on " << train_idx.size()
            << " images; held-out mAP@0.5 = " << format_fixed(ev.map50) << "\n";
}

// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string weights, data, out, config, resolution = "640x512";
  std::vector<std::string> sets;
  double tau = 0.5, nms_iou = 0.5;
  std::uint64_t seed = 0;
  bool force = false;
};

void cmd_detect(const DetectArgs& a) {
  const RunConfig cfg = config_for_weights(a.weights, a.config, a.sets);
  const auto [in_w, in_h] = parse_size(a.resolution);
  check_tau(a.tau);
  const fs::path out = ensure_outdir(a.out, a.force);
  Model<float> model(cfg.model);
  load_weights_checked(model, a.weights);
  const DatasetManifest manifest =
      load_manifest(a.data, class_names_for(cfg.model.num_classes));
  const std::vector<LoadedSample> samples = load_all_samples(manifest);

  std::vector<FrameDetections> frames;
  std::size_t total = 0;
  for (const LoadedSample& s : samples) {
    frames.push_back({s.image_id, detect_frame(model, s.frame, in_w, in_h, a.tau, a.nms_iou)});
    total += frames.back().dets.size();
  }
  write_detections_csv(frames, (out / "detections.csv").string());

  auto kv = config_kv(cfg);
  kv["command"] = "detect";
  kv["data"] = a.data;
  kv["weights"] = a.weights;
  kv["weight_hash"] = file_hash_hex(a.weights);
  kv["resolution"] = std::to_string(in_w) + "x" + std::to_string(in_h);
  kv["tau"] = format_fixed(a.tau);
  kv["nms_iou"] = format_fixed(a.nms_iou);
  kv["run_seed"] = std::to_string(a.seed);
  write_run_record(out, kv);
  std::cout << "wrote " << total << " detections across " << frames.size() << " frames\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string detections, detections_b, data, out, config, tag;
  std::vector<std::string> sets;
  double iou = 0.5;
  bool force = false;
};

void cmd_eval(const EvalArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.sets);
  const fs::path out = ensure_outdir(a.out, a.force);
  const DatasetManifest manifest =
      load_manifest(a.data, class_names_for(cfg.model.num_classes));
  const std::vector<LoadedSample> samples = load_all_samples(manifest);

  std::set<std::string> known_ids;
  for (const LoadedSample& s : samples) known_ids.insert(s.image_id);
  const auto aligned = [&](const std::string& path) {
    std::map<std::string, std::vector<Detection>> by_id;
    for (FrameDetections& f : read_detections_csv(path)) {
      if (!known_ids.count(f.frame_id))
        throw FormatError(path + ": frame '" + f.frame_id + "' is not in the manifest");
      auto& bucket = by_id[f.frame_id];
      bucket.insert(bucket.end(), f.dets.begin(), f.dets.end());
    }
    std::vector<FrameDetections> frames;
    frames.reserve(samples.size());
    for (const LoadedSample& s : samples) frames.push_back({s.image_id, by_id[s.image_id]});
    return frames;
  };
  const std::vector<FrameDetections> frames_a = aligned(a.detections);

  std::vector<std::vector<Detection>> dets_per_frame;
  std::vector<std::vector<LabeledBox>> gts_per_frame;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    dets_per_frame.push_back(frames_a[i].dets);
    gts_per_frame.push_back(samples[i].corners);
  }
  const DatasetEval ev = evaluate(dets_per_frame, gts_per_frame,
                                  static_cast<int>(cfg.model.num_classes), a.iou);
  for (const std::string& w : ev.warnings) std::cerr << "warning: " << w << "\n";
  write_pr_curve_csv(ev, (out / "pr_curve.csv").string());
  write_timeseries_csv(confidence_timeseries(frames_a), (out / "timeseries.csv").string());

  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("map50", format_fixed(ev.map50));
  const auto names = class_names_for(cfg.model.num_classes);
  for (std::size_t c = 0; c < ev.per_class_ap.size(); ++c)
    rows.emplace_back("ap_" + names[c],
                      ev.per_class_ap[c] ? format_fixed(*ev.per_class_ap[c]) : "");
  rows.emplace_back("total_gt", std::to_string(ev.total_gt));
  rows.emplace_back("calibrated_tau",
                    format_fixed(calibrate_threshold(ev.pooled_flags, ev.total_gt)));
  if (!a.tag.empty()) {
    std::vector<std::vector<Detection>> tag_dets;
    std::vector<std::vector<LabeledBox>> tag_gts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!manifest.entries[i].has_tag(a.tag)) continue;
      tag_dets.push_back(dets_per_frame[i]);
      tag_gts.push_back(gts_per_frame[i]);
    }
    rows.emplace_back("fp_per_frame_" + a.tag,
                      format_fixed(hot_bg_fp_rate(tag_dets, tag_gts, a.iou)));
  }
  write_summary_csv(rows, (out / "summary.csv").string());

  if (!a.detections_b.empty()) {
    const std::vector<FrameDetections> frames_b = aligned(a.detections_b);
    write_paired_timeseries_csv(
        paired_timeseries(confidence_timeseries(frames_a), confidence_timeseries(frames_b)),
        (out / "paired_timeseries.csv").string());
  }

  auto kv = config_kv(cfg);
  kv["command"] = "eval";
  kv["data"] = a.data;
  kv["detections"] = a.detections;
  if (!a.detections_b.empty()) kv["detections_b"] = a.detections_b;
  if (!a.tag.empty()) kv["tag"] = a.tag;
  kv["iou"] = format_fixed(a.iou);
  write_run_record(out, kv);
  std::cout << "mAP@0.5 = " << format_fixed(ev.map50) << " over " << samples.size()
            << " frames\n";
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string weights, data, out, config, resolution = "140x112";
  std::vector<std::string> sets;
  double tau = 0.5;
  std::int64_t warmup = 10;
  bool force = false;
};

void cmd_bench(const BenchArgs& a) {
  const RunConfig cfg = config_for_weights(a.weights, a.config, a.sets);
  const auto [in_w, in_h] = parse_size(a.resolution);
  check_tau(a.tau);
  const fs::path out = ensure_outdir(a.out, a.force);
  Model<float> model(cfg.model);
  load_weights_checked(model, a.weights);
  const DatasetManifest manifest =
      load_manifest(a.data, class_names_for(cfg.model.num_classes));

  std::vector<ThermalFrame> frames;
  frames.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries)
    frames.push_back(read_pgm(e.image_path.string()));

  std::size_t sink = 0;
  const FpsReport report = fps_bench(
      [&](const ThermalFrame& f) { sink += detect_frame(model, f, in_w, in_h, a.tau).size(); },
      frames, a.warmup);

  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("mean_fps", format_fixed(report.mean_fps));
  rows.emplace_back("p50_ms", format_fixed(report.p50_ms));
  rows.emplace_back("p99_ms", format_fixed(report.p99_ms));
  rows.emplace_back("frames_timed", std::to_string(report.frames_timed));
  rows.emplace_back("total_seconds", format_fixed(report.total_seconds));
  rows.emplace_back("detections", std::to_string(sink));
  write_summary_csv(rows, (out / "summary.csv").string());

  auto kv = config_kv(cfg);
  kv["command"] = "bench";
  kv["data"] = a.data;
  kv["weights"] = a.weights;
  kv["weight_hash"] = file_hash_hex(a.weights);
  kv["resolution"] = std::to_string(in_w) + "x" + std::to_string(in_h);
  kv["tau"] = format_fixed(a.tau);
  kv["warmup"] = std::to_string(a.warmup);
  write_run_record(out, kv);
  std::cout << a.resolution << ": " << format_fixed(report.mean_fps, 2) << " fps mean (p50 "
            << format_fixed(report.p50_ms, 3) << " ms, p99 " << format_fixed(report.p99_ms, 3)
            << " ms over " << report.frames_timed << " frames)\n";
}

// ---------------------------------------------------------------------------

struct AugmentArgs {
  std::string data, out, config, mode;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  double intensity = 0.35;
  bool force = false;
};

void cmd_augment(const AugmentArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.sets);
  const fs::path out = ensure_outdir(a.out, a.force);
  const DatasetManifest manifest =
      load_manifest(a.data, class_names_for(cfg.model.num_classes));
  const std::vector<LoadedSample> samples = load_all_samples(manifest);
  if (a.mode == "mosaic" && samples.size() < 4)
    throw ValidationError("mosaic needs at least four images, got " +
                          std::to_string(samples.size()));

  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng(derive_seed(a.seed, i));
    Sample s;
    s.frame = samples[i].frame;
    s.boxes = samples[i].corners;
    if (a.mode == "hflip") {
      s = hflip_with_boxes(s.frame, s.boxes);
    } else if (a.mode == "mosaic") {
      std::array<Sample, 4> tiles;
      for (std::size_t t = 0; t < 4; ++t) {
        const LoadedSample& src = samples[(i + t) % samples.size()];
        tiles[t].frame = src.frame;
        tiles[t].boxes = src.corners;
      }
      s = mosaic4(tiles, rng);
    } else if (a.mode == "temp_bias" || a.mode == "specular" || a.mode == "cutout" ||
               a.mode == "cutmix") {
      const ArtifactMode mode = a.mode == "temp_bias"  ? ArtifactMode::temp_bias
                                : a.mode == "specular" ? ArtifactMode::specular
                                : a.mode == "cutout"   ? ArtifactMode::cutout
                                                       : ArtifactMode::cutmix;
      s.frame = thermal_artifacts(s.frame, s.boxes, mode, rng).frame;
    } else if (a.mode == "fog" || a.mode == "rain") {
      s.frame = fog_rain_overlay(
          s.frame, a.mode == "fog" ? WeatherMode::fog : WeatherMode::rain, a.intensity, rng);
    } else if (a.mode == "pipeline") {
      s = augment_single(std::move(s), cfg.aug, rng);
    } else {
      throw ConfigError("unknown augmentation mode '" + a.mode + "'");
    }

    write_pgm(s.frame, (out / (samples[i].image_id + ".pgm")).string(), 16);
    const fs::path label_path = out / (samples[i].image_id + ".txt");
    std::ofstream labels(label_path, std::ios::trunc);
    if (!labels) throw IoError("cannot write " + label_path.string());
    const double W = static_cast<double>(s.frame.width);
    const double H = static_cast<double>(s.frame.height);
    for (const LabeledBox& b : s.boxes)
      labels << b.class_id << ' ' << detail::config_float_str(b.box.cx() / W) << ' '
             << detail::config_float_str(b.box.cy() / H) << ' '
             << detail::config_float_str(b.box.width() / W) << ' '
             << detail::config_float_str(b.box.height() / H) << '\n';
  }

  auto kv = config_kv(cfg);
  kv["command"] = "augment";
  kv["data"] = a.data;
  kv["mode"] = a.mode;
  kv["run_seed"] = std::to_string(a.seed);
  kv["intensity"] = format_fixed(a.intensity);
  write_run_record(out, kv);
  std::cout << "augmented " << samples.size() << " frames with mode " << a.mode << "\n";
}

// ---------------------------------------------------------------------------

struct FoldsArgs {
  std::string data, out, config;
  std::vector<std::string> sets;
  int k = 10;
  std::uint64_t seed = 0;
  bool force = false;
};

void cmd_folds(const FoldsArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.sets);
  const fs::path out = ensure_outdir(a.out, a.force);
  const DatasetManifest manifest =
      load_manifest(a.data, class_names_for(cfg.model.num_classes));
  const FoldSplit split = make_folds(manifest, a.k, a.seed);
  write_folds(split, out.string());

  auto kv = config_kv(cfg);
  kv["command"] = "folds";
  kv["data"] = a.data;
  kv["k"] = std::to_string(a.k);
  kv["run_seed"] = std::to_string(a.seed);
  write_run_record(out, kv);
  for (std::size_t f = 0; f < split.folds.size(); ++f)
    std::cout << "fold_" << f << ": " << split.folds[f].size() << " images\n";
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string config, out, input = "640x512";
  std::vector<std::string> sets;
  bool force = false;
};

void cmd_inspect(const InspectArgs& a) {
  const RunConfig cfg = resolve_config(a.config, a.sets);
  const auto [in_w, in_h] = parse_size(a.input);
  const std::int64_t stride = cfg.model.max_stride();
  const std::int64_t pw = ((in_w + stride - 1) / stride) * stride;
  const std::int64_t ph = ((in_h + stride - 1) / stride) * stride;
  Model<float> model(cfg.model);

  std::map<std::string, std::string> kv;
  kv["params"] = std::to_string(model.param_count());
  kv["weight_payload_bytes"] = std::to_string(model.param_count() * 4);
  kv["flops"] = std::to_string(flops_estimate(cfg.model, ph, pw));
  kv["input_padded"] = std::to_string(pw) + "x" + std::to_string(ph);
  kv["head_channels"] = std::to_string(cfg.model.head_channels());
  kv["stage_channels"] = detail::join_ints(cfg.model.stage_channels);
  kv["fpn_channels"] = std::to_string(cfg.model.fpn_channels);
  kv["strides"] = detail::join_ints(cfg.model.strides);
  kv["num_classes"] = std::to_string(cfg.model.num_classes);
  for (const auto& [k, v] : kv) std::cout << k << " = " << v << "\n";

  if (!a.out.empty()) {
    const fs::path out = ensure_outdir(a.out, a.force);
    auto record = config_kv(cfg);
    record.insert(kv.begin(), kv.end());
    record["command"] = "inspect";
    write_run_record(out, record);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ltv: single-shot thermal pedestrian detection toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a detector from a manifest");
  train_cmd->add_option("--data", train_args.data, "Dataset manifest (TSV)")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--config", train_args.config, "Config file (key = value lines)");
  train_cmd->add_option("--set", train_args.sets, "Override one config key (key=value)");
  train_cmd->add_option("--input", train_args.input, "Training resolution WxH");
  train_cmd->add_option("--folds-dir", train_args.folds_dir, "Directory with fold_K.txt files");
  train_cmd->add_option("--num-folds", train_args.num_folds, "Total fold count");
  train_cmd->add_option("--fold", train_args.fold, "Held-out fold index");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every,
                        "Checkpoint every N epochs (0: final only)");
  train_cmd->add_flag("--force", train_args.force, "Allow a non-empty output directory");

  DetectArgs detect_args;
  CLI::App* detect_cmd = app.add_subcommand("detect", "Run detection over a manifest");
  detect_cmd->add_option("--weights", detect_args.weights, "Weight checkpoint")->required();
  detect_cmd->add_option("--data", detect_args.data, "Dataset manifest (TSV)")->required();
  detect_cmd->add_option("--out", detect_args.out, "Output directory")->required();
  detect_cmd->add_option("--config", detect_args.config, "Config file");
  detect_cmd->add_option("--set", detect_args.sets, "Override one config key (key=value)");
  detect_cmd->add_option("--resolution", detect_args.resolution, "Inference resolution WxH");
  detect_cmd->add_option("--tau", detect_args.tau, "Score threshold");
  detect_cmd->add_option("--nms-iou", detect_args.nms_iou, "NMS IoU threshold");
  detect_cmd->add_option("--seed", detect_args.seed, "Seed recorded in run metadata");
  detect_cmd->add_flag("--force", detect_args.force, "Allow a non-empty output directory");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score detections against ground truth");
  eval_cmd->add_option("--detections", eval_args.detections, "Detection CSV")->required();
  eval_cmd->add_option("--data", eval_args.data, "Dataset manifest (TSV)")->required();
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--detections-b", eval_args.detections_b,
                       "Second detection CSV for a paired time series");
  eval_cmd->add_option("--config", eval_args.config, "Config file");
  eval_cmd->add_option("--set", eval_args.sets, "Override one config key (key=value)");
  eval_cmd->add_option("--iou", eval_args.iou, "Matching IoU threshold");
  eval_cmd->add_option("--tag", eval_args.tag, "Report FP/frame over frames with this tag");
  eval_cmd->add_flag("--force", eval_args.force, "Allow a non-empty output directory");

  BenchArgs bench_args;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Time the detection pipeline");
  bench_cmd->add_option("--weights", bench_args.weights, "Weight checkpoint")->required();
  bench_cmd->add_option("--data", bench_args.data, "Dataset manifest (TSV)")->required();
  bench_cmd->add_option("--out", bench_args.out, "Output directory")->required();
  bench_cmd->add_option("--config", bench_args.config, "Config file");
  bench_cmd->add_option("--set", bench_args.sets, "Override one config key (key=value)");
  bench_cmd->add_option("--resolution", bench_args.resolution, "Inference resolution WxH");
  bench_cmd->add_option("--tau", bench_args.tau, "Score threshold");
  bench_cmd->add_option("--warmup", bench_args.warmup, "Untimed warmup frames");
  bench_cmd->add_flag("--force", bench_args.force, "Allow a non-empty output directory");

  AugmentArgs augment_args;
  CLI::App* augment_cmd = app.add_subcommand("augment", "Write augmented frames and labels");
  augment_cmd->add_option("--data", augment_args.data, "Dataset manifest (TSV)")->required();
  augment_cmd->add_option("--out", augment_args.out, "Output directory")->required();
  augment_cmd
      ->add_option("--mode", augment_args.mode,
                   "hflip|mosaic|temp_bias|specular|cutout|cutmix|fog|rain|pipeline")
      ->required();
  augment_cmd->add_option("--config", augment_args.config, "Config file");
  augment_cmd->add_option("--set", augment_args.sets, "Override one config key (key=value)");
  augment_cmd->add_option("--seed", augment_args.seed, "Augmentation seed");
  augment_cmd->add_option("--intensity", augment_args.intensity, "Fog/rain intensity");
  augment_cmd->add_flag("--force", augment_args.force, "Allow a non-empty output directory");

  FoldsArgs folds_args;
  CLI::App* folds_cmd = app.add_subcommand("folds", "Write stratified cross-validation folds");
  folds_cmd->add_option("--data", folds_args.data, "Dataset manifest (TSV)")->required();
  folds_cmd->add_option("--out", folds_args.out, "Output directory")->required();
  folds_cmd->add_option("--config", folds_args.config, "Config file");
  folds_cmd->add_option("--set", folds_args.sets, "Override one config key (key=value)");
  folds_cmd->add_option("--k", folds_args.k, "Fold count");
  folds_cmd->add_option("--seed", folds_args.seed, "Shuffle seed");
  folds_cmd->add_flag("--force", folds_args.force, "Allow a non-empty output directory");

  InspectArgs inspect_args;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Print model size and cost");
  inspect_cmd->add_option("--config", inspect_args.config, "Config file");
  inspect_cmd->add_option("--set", inspect_args.sets, "Override one config key (key=value)");
  inspect_cmd->add_option("--input", inspect_args.input, "Input size WxH for the FLOP count");
  inspect_cmd->add_option("--out", inspect_args.out, "Optional directory for run.txt");
  inspect_cmd->add_flag("--force", inspect_args.force, "Allow a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    thread_cap();  // validate LTV_THREADS before doing any work
    if (app.got_subcommand(train_cmd)) cmd_train(train_args);
    if (app.got_subcommand(detect_cmd)) cmd_detect(detect_args);
    if (app.got_subcommand(eval_cmd)) cmd_eval(eval_args);
    if (app.got_subcommand(bench_cmd)) cmd_bench(bench_args);
    if (app.got_subcommand(augment_cmd)) cmd_augment(augment_args);
    if (app.got_subcommand(folds_cmd)) cmd_folds(folds_args);
    if (app.got_subcommand(inspect_cmd)) cmd_inspect(inspect_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
