#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "ltv/augment.hpp"
#include "ltv/config.hpp"
#include "ltv/dataset.hpp"
#include "ltv/image.hpp"
#include "ltv/loss.hpp"
#include "ltv/model.hpp"
#include "ltv/optim.hpp"
#include "ltv/postprocess.hpp"
#include "ltv/weights.hpp"

namespace ltv {

/// One training image at its native resolution with pixel-space boxes.
struct TrainSample {
  ThermalFrame frame;
  std::vector<GtBox> boxes;
};

struct EpochStats {
  std::int64_t epoch = 0;
  double total = 0, obj = 0, cls = 0, loc = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochStats> log;
  std::int64_t steps = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainOptions {
  std::int64_t input_w = 160, input_h = 128;  // resize target before letterbox
  std::filesystem::path checkpoint_dir;       // empty disables checkpoints
  std::int64_t checkpoint_every = 0;          // epochs between snapshots; 0 = final only
  std::ostream* progress = nullptr;
};

/// Epoch log rows: `epoch,total,obj,cls,loc,lr,seconds`. The seconds column
/// is wall clock and is the one deliberately non-reproducible output field.
inline void write_epoch_log(const std::vector<EpochStats>& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_epoch_log: cannot open " + path);
  out << "epoch,total,obj,cls,loc,lr,seconds\n";
  for (const EpochStats& e : log)
    out << e.epoch << ',' << format_fixed(e.total) << ',' << format_fixed(e.obj) << ','
        << format_fixed(e.cls) << ',' << format_fixed(e.loc) << ',' << format_fixed(e.lr, 8)
        << ',' << format_fixed(e.seconds, 3) << '\n';
  if (!out) throw IoError("write_epoch_log: short write to " + path);
}

namespace detail {

/// Native sample -> augmented, resized, letterboxed network input. Boxes that
/// collapse below 2 px on either side during resize are dropped.
template <typename T>
void prepare_train_sample(const TrainSample& native, const AugmentationSpec& aug_spec,
                          Rng& rng, std::int64_t input_w, std::int64_t input_h,
                          std::int64_t stride_multiple, Tensor<T>& batch, std::int64_t slot,
                          std::vector<std::vector<GtBox>>& batch_boxes,
                          const std::vector<TrainSample>* mosaic_pool) {
  Sample sample;
  sample.frame = native.frame;
  for (const GtBox& b : native.boxes)
    sample.boxes.push_back({BBox::from_center(b.cx, b.cy, b.w, b.h), b.class_id});

  if (mosaic_pool && rng.uniform() < aug_spec.mosaic_p) {
    std::array<Sample, 4> tiles;
    tiles[0] = sample;
    bool dims_ok = true;
    for (int t = 1; t < 4; ++t) {
      const TrainSample& other = (*mosaic_pool)[rng.uniform_index(mosaic_pool->size())];
      if (other.frame.width != sample.frame.width ||
          other.frame.height != sample.frame.height) {
        dims_ok = false;
        break;
      }
      tiles[static_cast<std::size_t>(t)].frame = other.frame;
      for (const GtBox& b : other.boxes)
        tiles[static_cast<std::size_t>(t)].boxes.push_back(
            {BBox::from_center(b.cx, b.cy, b.w, b.h), b.class_id});
    }
    if (dims_ok) sample = mosaic4(tiles, rng);
  }
  sample = augment_single(std::move(sample), aug_spec, rng);

  const double sx = static_cast<double>(input_w) / static_cast<double>(sample.frame.width);
  const double sy = static_cast<double>(input_h) / static_cast<double>(sample.frame.height);
  ThermalFrame resized = (sample.frame.width == input_w && sample.frame.height == input_h)
                             ? sample.frame
                             : bilinear_resize(sample.frame, input_w, input_h);
  ThermalFrame padded = letterbox_to_stride(resized, stride_multiple);

  for (std::int64_t y = 0; y < padded.height; ++y)
    for (std::int64_t x = 0; x < padded.width; ++x)
      batch.at(slot, 0, y, x) = static_cast<T>(padded.at(y, x));

  std::vector<GtBox>& boxes = batch_boxes[static_cast<std::size_t>(slot)];
  for (const LabeledBox& lb : sample.boxes) {
    GtBox b;
    b.cx = lb.box.cx() * sx;
    b.cy = lb.box.cy() * sy;
    b.w = lb.box.width() * sx;
    b.h = lb.box.height() * sy;
    b.class_id = lb.class_id;
    if (b.w < 2.0 || b.h < 2.0) continue;
    boxes.push_back(b);
  }
}

}  // namespace detail

/// Deterministic single-threaded training: seeded shuffle each epoch, mosaic
/// and per-sample augmentation at native resolution, resize + letterbox to
/// the input size, composite loss, Adam with per-step cosine annealing. A
/// non-finite loss or gradient aborts, restoring the last epoch-end weights
/// (and leaving the last-good checkpoint file in place).
template <typename T>
TrainResult train(const std::vector<TrainSample>& dataset, Model<T>& model,
                  const TrainConfig& tcfg, const LossWeights& weights,
                  const AugmentationSpec& aug_spec, const TrainOptions& opts = {}) {
  tcfg.validate();
  weights.validate();
  aug_spec.validate();
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  if (tcfg.batch_size > static_cast<std::int64_t>(dataset.size()))
    throw ConfigError("train: batch_size " + std::to_string(tcfg.batch_size) +
                      " exceeds the " + std::to_string(dataset.size()) + "-image dataset");
  const ModelConfig& mcfg = model.config();
  const std::int64_t stride = mcfg.max_stride();
  const std::int64_t padded_w = ((opts.input_w + stride - 1) / stride) * stride;
  const std::int64_t padded_h = ((opts.input_h + stride - 1) / stride) * stride;

  const std::int64_t n = static_cast<std::int64_t>(dataset.size());
  const std::int64_t steps_per_epoch = (n + tcfg.batch_size - 1) / tcfg.batch_size;
  const std::int64_t total_steps = steps_per_epoch * tcfg.epochs;

  AdamState<T> adam;
  adam.init(model);
  TrainResult result;
  WeightStore last_good = snapshot_weights(model);

  const auto checkpoint = [&](const std::string& name) {
    if (opts.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(opts.checkpoint_dir);
    const auto path = opts.checkpoint_dir / name;
    save_model(model, path.string());
    RunConfig rc;
    rc.model = mcfg;
    rc.train = tcfg;
    rc.loss = weights;
    rc.aug = aug_spec;
    std::ofstream sidecar(path.string() + ".cfg", std::ios::trunc);
    sidecar << serialize_config(rc);
  };

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  std::int64_t global_step = 0;
  for (std::int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(tcfg.seed, 0x0d0e + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double sum_total = 0, sum_obj = 0, sum_cls = 0, sum_loc = 0;
    double last_lr = tcfg.learning_rate;
    try {
      for (std::int64_t step = 0; step < steps_per_epoch; ++step) {
        const std::int64_t begin = step * tcfg.batch_size;
        const std::int64_t batch_n = std::min(tcfg.batch_size, n - begin);
        Tensor<T> batch(batch_n, mcfg.input_channels, padded_h, padded_w);
        std::vector<std::vector<GtBox>> batch_boxes(static_cast<std::size_t>(batch_n));
        for (std::int64_t b = 0; b < batch_n; ++b) {
          const std::int64_t idx = order[static_cast<std::size_t>(begin + b)];
          Rng sample_rng(derive_seed(
              aug_spec.seed != 0 ? aug_spec.seed : tcfg.seed,
              0xa000000u + static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n) +
                  static_cast<std::uint64_t>(idx)));
          detail::prepare_train_sample(dataset[static_cast<std::size_t>(idx)], aug_spec,
                                       sample_rng, opts.input_w, opts.input_h, stride, batch,
                                       b, batch_boxes, &dataset);
        }

        typename Model<T>::Tape tape;
        RawPredictions<T> preds = model.forward(batch, BnMode::train, &tape);
        TargetGrids<T> targets = assign_targets<T>(batch_boxes, mcfg, padded_h, padded_w);
        RawPredictions<T> grads;
        LossBreakdown<T> breakdown = composite_loss(preds, targets, mcfg, weights, &grads);
        if (!std::isfinite(static_cast<double>(breakdown.total)))
          throw NumericError("loss became non-finite at epoch " + std::to_string(epoch + 1) +
                             " step " + std::to_string(step + 1));
        model.zero_grads();
        model.backward(grads, tape);
        last_lr = cosine_lr(global_step, total_steps, tcfg);
        adam_step(model, adam, last_lr, tcfg);
        ++global_step;
        ++result.steps;
        sum_total += static_cast<double>(breakdown.total);
        sum_obj += static_cast<double>(breakdown.obj);
        sum_cls += static_cast<double>(breakdown.cls);
        sum_loc += static_cast<double>(breakdown.loc);
      }
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      load_weights(model, last_good);
      if (opts.progress)
        *opts.progress << "aborted at epoch " << (epoch + 1) << ": " << e.what() << "\n";
      return result;
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.total = sum_total / static_cast<double>(steps_per_epoch);
    stats.obj = sum_obj / static_cast<double>(steps_per_epoch);
    stats.cls = sum_cls / static_cast<double>(steps_per_epoch);
    stats.loc = sum_loc / static_cast<double>(steps_per_epoch);
    stats.lr = last_lr;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                  epoch_start)
                        .count();
    result.log.push_back(stats);
    if (opts.progress)
      *opts.progress << "epoch " << stats.epoch << "/" << tcfg.epochs << " total "
                     << format_fixed(stats.total) << " lr " << format_fixed(stats.lr, 8)
                     << "\n";
    last_good = snapshot_weights(model);
    if (opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0)
      checkpoint("checkpoint_epoch_" + std::to_string(epoch + 1) + ".ltvw");
  }
  checkpoint("checkpoint_final.ltvw");
  return result;
}

/// Inference for one frame: resize to the requested input, letterbox, run the
/// model in infer mode, decode back to native coordinates, threshold, NMS.
template <typename T>
std::vector<Detection> detect_frame(Model<T>& model, const ThermalFrame& frame,
                                    std::int64_t input_w, std::int64_t input_h, double tau,
                                    double nms_iou = 0.5) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ValidationError("detect_frame: tau must lie in [0,1]");
  PadRecord record;
  const ThermalFrame prepared =
      prepare_frame(frame, input_w, input_h, model.config().max_stride(), &record);
  Tensor<T> input(1, model.config().input_channels, prepared.height, prepared.width);
  for (std::int64_t y = 0; y < prepared.height; ++y)
    for (std::int64_t x = 0; x < prepared.width; ++x)
      input.at(0, 0, y, x) = static_cast<T>(prepared.at(y, x));
  const RawPredictions<T> preds = model.forward(input, BnMode::infer);
  return nms(threshold_filter(decode(preds, model.config(), record), tau), nms_iou);
}

}  // namespace ltv
