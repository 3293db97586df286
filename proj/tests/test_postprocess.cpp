#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ltv/loss.hpp"
#include "ltv/postprocess.hpp"
#include "ltv/rng.hpp"
#include "oracles.hpp"

using namespace ltv;

namespace {

/// Zeroed prediction grids for one frame of the given config at padded size.
template <typename T>
RawPredictions<T> empty_preds(const ModelConfig& cfg, std::int64_t padded_h,
                              std::int64_t padded_w) {
  RawPredictions<T> preds;
  for (std::int64_t s : cfg.strides)
    preds.emplace_back(1, cfg.head_channels(), padded_h / s, padded_w / s);
  return preds;
}

PadRecord plain_record(std::int64_t w, std::int64_t h) {
  PadRecord rec;
  rec.orig_w = rec.content_w = rec.padded_w = w;
  rec.orig_h = rec.content_h = rec.padded_h = h;
  return rec;
}

Detection make_det(double x1, double y1, double x2, double y2, double score, int cls) {
  Detection d;
  d.bbox = BBox{x1, y1, x2, y2};
  d.score = score;
  d.class_id = cls;
  return d;
}

}  // namespace

TEST_CASE("decode turns zero logits into cell-centered stride-sized boxes") {
  ModelConfig cfg = micro_config();
  const auto preds = empty_preds<float>(cfg, 64, 64);
  const PadRecord rec = plain_record(64, 64);
  auto dets = decode(preds, cfg, rec);
  // Every cell of every level yields one box (none clip to zero area here).
  std::size_t expected = 0;
  for (std::int64_t s : cfg.strides)
    expected += static_cast<std::size_t>((64 / s) * (64 / s));
  REQUIRE(dets.size() == expected);
  // tx=ty=0 centers the box at the cell midpoint; tw=th=0 gives w=h=stride.
  const Detection& first = dets.front();
  REQUIRE(first.level == 0);
  REQUIRE(first.bbox.cx() == Catch::Approx(0.5 * 8.0));
  REQUIRE(first.bbox.cy() == Catch::Approx(0.5 * 8.0));
  // The corner cell's stride-sized box lands exactly on [0,0,8,8].
  REQUIRE(first.bbox.x1 == 0.0);
  REQUIRE(first.bbox.x2 == Catch::Approx(8.0));
  // An interior cell keeps the full stride-sized square.
  bool found_interior = false;
  for (const Detection& d : dets)
    if (d.level == 0 && d.bbox.cx() == Catch::Approx(3.5 * 8.0) &&
        d.bbox.cy() == Catch::Approx(3.5 * 8.0)) {
      REQUIRE(d.bbox.width() == Catch::Approx(8.0));
      REQUIRE(d.bbox.height() == Catch::Approx(8.0));
      found_interior = true;
    }
  REQUIRE(found_interior);
  // Zero logits mean sigmoid 0.5 everywhere: score = 0.5 * 0.5.
  REQUIRE(first.score == Catch::Approx(0.25));
}

TEST_CASE("an obj logit of -20 gates the score below 1e-8") {
  ModelConfig cfg = micro_config();
  auto preds = empty_preds<float>(cfg, 64, 64);
  for (auto& level : preds) {
    for (std::int64_t i = 0; i < level.h(); ++i)
      for (std::int64_t j = 0; j < level.w(); ++j) {
        level.at(0, 4, i, j) = -20.0f;
        for (std::int64_t c = 5; c < level.c(); ++c) level.at(0, c, i, j) = 30.0f;
      }
  }
  for (const Detection& d : decode(preds, cfg, plain_record(64, 64)))
    REQUIRE(d.score < 1e-8);
}

TEST_CASE("decode validates record and shape consistency") {
  ModelConfig cfg = micro_config();
  const auto preds = empty_preds<float>(cfg, 64, 64);
  PadRecord wrong = plain_record(96, 64);
  REQUIRE_THROWS_AS(decode(preds, cfg, wrong), ValidationError);
  REQUIRE_THROWS_WITH(decode(preds, cfg, wrong),
                      Catch::Matchers::ContainsSubstring("coordinates"));

  auto bad = preds;
  bad.pop_back();
  REQUIRE_THROWS_AS(decode(bad, cfg, plain_record(64, 64)), ShapeError);

  auto bad_ch = empty_preds<float>(cfg, 64, 64);
  bad_ch[1] = TensorF(1, 3, 8, 8);
  REQUIRE_THROWS_AS(decode(bad_ch, cfg, plain_record(64, 64)), ShapeError);
}

TEST_CASE("decode then unpad maps boxes back to original frame coordinates") {
  ModelConfig cfg = micro_config();
  // 140x112 frame letterboxed to 160x128: padded coords scale 1:1 and clip.
  PadRecord rec;
  rec.orig_w = rec.content_w = 140;
  rec.orig_h = rec.content_h = 112;
  rec.padded_w = 160;
  rec.padded_h = 128;
  rec.pad_right = 20;
  rec.pad_bottom = 16;
  const auto preds = empty_preds<float>(cfg, 128, 160);
  auto dets = decode(preds, cfg, rec);
  for (const Detection& d : dets) {
    REQUIRE(d.bbox.x2 <= 140.0);
    REQUIRE(d.bbox.y2 <= 112.0);
  }
  // Cells fully inside the padding decode to zero-area clipped boxes: dropped.
  std::size_t all_cells = 0;
  for (std::int64_t s : cfg.strides)
    all_cells += static_cast<std::size_t>((128 / s) * (160 / s));
  REQUIRE(dets.size() < all_cells);
}

TEST_CASE("encoding a ground-truth box and decoding reproduces it") {
  // Fixpoint within 1e-4 px through assignment, encode, and decode.
  ModelConfig cfg = micro_config();
  Rng rng(404);
  const std::int64_t H = 128, W = 160;
  for (int trial = 0; trial < 25; ++trial) {
    GtBox gt;
    gt.w = rng.uniform(6.0, 140.0);
    gt.h = rng.uniform(6.0, 100.0);
    gt.cx = rng.uniform(gt.w / 2 + 1.0, W - gt.w / 2 - 1.0);
    gt.cy = rng.uniform(gt.h / 2 + 1.0, H - gt.h / 2 - 1.0);
    gt.class_id = static_cast<int>(rng.uniform_index(2));

    TargetGrids<float> targets = assign_targets<float>({{gt}}, cfg, H, W);
    REQUIRE(targets.positives.size() == 1);
    const AssignedTarget& a = targets.positives[0];
    const double s = static_cast<double>(cfg.strides[static_cast<std::size_t>(a.level)]);

    auto preds = empty_preds<double>(cfg, H, W);
    double tx, ty, tw, th;
    encode_cell(gt.cx, gt.cy, gt.w, gt.h, a.i, a.j, s, &tx, &ty, &tw, &th);
    Tensor<double>& level = preds[static_cast<std::size_t>(a.level)];
    level.at(0, 0, a.i, a.j) = tx;
    level.at(0, 1, a.i, a.j) = ty;
    level.at(0, 2, a.i, a.j) = tw;
    level.at(0, 3, a.i, a.j) = th;

    auto dets = decode(preds, cfg, plain_record(W, H));
    // The encoded cell is the detection nearest the ground-truth center.
    double best_d = 1e30;
    BBox best;
    for (const Detection& d : dets) {
      const double dist = std::abs(d.bbox.cx() - gt.cx) + std::abs(d.bbox.cy() - gt.cy);
      if (dist < best_d) {
        best_d = dist;
        best = d.bbox;
      }
    }
    REQUIRE(std::abs(best.cx() - gt.cx) < 1e-4);
    REQUIRE(std::abs(best.cy() - gt.cy) < 1e-4);
    REQUIRE(std::abs(best.width() - gt.w) < 1e-4);
    REQUIRE(std::abs(best.height() - gt.h) < 1e-4);
  }
}

TEST_CASE("threshold filter keeps boundary scores and sorts descending") {
  std::vector<Detection> dets{make_det(0, 0, 1, 1, 0.5, 0), make_det(1, 1, 2, 2, 0.9, 0),
                              make_det(2, 2, 3, 3, 0.49, 1)};
  auto kept = threshold_filter(dets, 0.5);
  REQUIRE(kept.size() == 2);
  REQUIRE(kept[0].score == 0.9);
  REQUIRE(kept[1].score == 0.5);

  REQUIRE(threshold_filter(dets, 0.0).size() == 3);
  REQUIRE(threshold_filter(dets, 1.0).empty());
  dets.push_back(make_det(3, 3, 4, 4, 1.0, 0));
  REQUIRE(threshold_filter(dets, 1.0).size() == 1);
}

TEST_CASE("raising tau never increases the detection count") {
  Rng rng(7);
  std::vector<Detection> dets;
  for (int i = 0; i < 200; ++i)
    dets.push_back(make_det(0, 0, 1, 1, rng.uniform(), static_cast<int>(rng.uniform_index(2))));
  std::size_t prev = dets.size() + 1;
  for (double tau = 0.0; tau <= 1.0; tau += 0.05) {
    const std::size_t n = threshold_filter(dets, tau).size();
    REQUIRE(n <= prev);
    prev = n;
  }
}

TEST_CASE("threshold filter keeps equal scores in input order") {
  std::vector<Detection> dets{make_det(5, 0, 6, 1, 0.7, 0), make_det(1, 0, 2, 1, 0.7, 1),
                              make_det(3, 0, 4, 1, 0.8, 0)};
  auto kept = threshold_filter(dets, 0.0);
  REQUIRE(kept[0].score == 0.8);
  REQUIRE(kept[1].bbox.x1 == 5.0);  // stable: first 0.7 entry stays first
  REQUIRE(kept[2].bbox.x1 == 1.0);
}

TEST_CASE("nms keeps the higher scored of two overlapping same-class boxes") {
  // IoU of [0,0,10,10] and [0,3,10,13] is 7/13 > 0.5.
  std::vector<Detection> dets{make_det(0, 0, 10, 10, 0.9, 0), make_det(0, 3, 10, 13, 0.8, 0)};
  auto kept = nms(dets, 0.5);
  REQUIRE(kept.size() == 1);
  REQUIRE(kept[0].score == 0.9);
}

TEST_CASE("nms never suppresses across classes") {
  std::vector<Detection> dets{make_det(0, 0, 10, 10, 0.9, 0), make_det(0, 0, 10, 10, 0.8, 1)};
  REQUIRE(nms(dets, 0.5).size() == 2);
}

TEST_CASE("nms matches the brute-force oracle on random scenes") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 50; ++i) {
      const double x = rng.uniform(0.0, 80.0), y = rng.uniform(0.0, 80.0);
      dets.push_back(make_det(x, y, x + rng.uniform(5.0, 30.0), y + rng.uniform(5.0, 30.0),
                              rng.uniform(), static_cast<int>(rng.uniform_index(2))));
    }
    auto fast = nms(dets, 0.5);
    auto slow = oracle::nms_oracle(dets, 0.5);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      REQUIRE(fast[i].score == slow[i].score);
      REQUIRE(fast[i].bbox.x1 == slow[i].bbox.x1);
      REQUIRE(fast[i].bbox.y1 == slow[i].bbox.y1);
      REQUIRE(fast[i].class_id == slow[i].class_id);
    }
    // Survivors form a subset with no same-class pair above the threshold.
    for (std::size_t i = 0; i < fast.size(); ++i)
      for (std::size_t j = i + 1; j < fast.size(); ++j)
        if (fast[i].class_id == fast[j].class_id)
          REQUIRE(iou(fast[i].bbox, fast[j].bbox) <= 0.5);
  }
}

TEST_CASE("nms tie-break is deterministic for equal scores") {
  std::vector<Detection> dets{make_det(20, 0, 30, 10, 0.8, 0), make_det(0, 0, 10, 10, 0.8, 0)};
  auto kept = nms(dets, 0.5);
  REQUIRE(kept.size() == 2);
  REQUIRE(kept[0].bbox.x1 == 0.0);  // lower x1 wins the tie
  REQUIRE(kept[1].bbox.x1 == 20.0);
}

TEST_CASE("detections serialize with 6-decimal fixed formatting") {
  Detection d = make_det(1.25, 2.0, 3.5, 4.125, 0.875, 1);
  REQUIRE(detection_csv_row("frame_000", d) ==
          "frame_000,1,0.875000,1.250000,2.000000,3.500000,4.125000");
  REQUIRE(format_fixed(1.0 / 3.0) == "0.333333");

  const std::string path =
      (std::filesystem::temp_directory_path() / "ltv_dets.csv").string();
  write_detections_csv({{"f0", {d}}, {"f1", {}}}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "frame_id,class_id,score,x1,y1,x2,y2");
  std::getline(in, line);
  REQUIRE(line.substr(0, 3) == "f0,");
  REQUIRE_FALSE(std::getline(in, line));
  std::remove(path.c_str());
}
