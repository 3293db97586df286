#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ltv/config.hpp"
#include "ltv/dataset.hpp"

using namespace ltv;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(LTV_TEST_DIR) / "fixtures";

/// Builds a synthetic single-instance dataset on disk: `child_n` images with
/// one class-0 box, `adult_n` with one class-1 box.
std::filesystem::path write_synthetic_dataset(const std::string& name, int child_n,
                                              int adult_n) {
  const std::filesystem::path root = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root / "frames");
  std::filesystem::create_directories(root / "labels");
  std::ofstream manifest(root / "manifest.tsv");
  for (int i = 0; i < child_n + adult_n; ++i) {
    const std::string id = "img_" + std::to_string(1000 + i);
    write_pgm(make_frame(8, 8, 0.5f), (root / "frames" / (id + ".pgm")).string());
    std::ofstream label(root / "labels" / (id + ".txt"));
    label << (i < child_n ? 0 : 1) << " 0.5 0.5 0.4 0.6\n";
    manifest << "frames/" << id << ".pgm\tlabels/" << id << ".txt\n";
  }
  return root / "manifest.tsv";
}

double fold_child_ratio(const FoldSplit& split, std::size_t fold, int child_n) {
  // Synthetic ids are ordered: img_1000..img_{1000+child_n-1} are class 0.
  int child = 0, total = 0;
  for (const std::string& id : split.folds[fold]) {
    const int idx = std::stoi(id.substr(4)) - 1000;
    if (idx < child_n) ++child;
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(child) / total;
}

}  // namespace

TEST_CASE("annotation lines map directly to normalized boxes") {
  auto anns = parse_annotation("0 0.5 0.5 0.2 0.4\n1 0.25 0.25 0.1 0.1\n", 2);
  REQUIRE(anns.size() == 2);
  REQUIRE(anns[0].class_id == 0);
  REQUIRE(anns[0].cx == 0.5);
  REQUIRE(anns[0].w == 0.2);
  REQUIRE(anns[0].h == 0.4);
  REQUIRE(anns[1].class_id == 1);

  REQUIRE(parse_annotation("", 2).empty());
  REQUIRE(parse_annotation("\n  \n# comment\n", 2).empty());
}

TEST_CASE("annotation errors carry line numbers") {
  REQUIRE_THROWS_WITH(parse_annotation("0 0.5 0.5 0.2 0.4\n0 0.5 0.5\n", 2, "labels.txt"),
                      Catch::Matchers::ContainsSubstring("labels.txt:2"));
  REQUIRE_THROWS_WITH(parse_annotation("0 0.5 abc 0.2 0.4\n", 2, "labels.txt"),
                      Catch::Matchers::ContainsSubstring("expected decimal"));
  // Zero width violates the invariant.
  REQUIRE_THROWS_WITH(parse_annotation("0 0.5 0.5 0 0.1\n", 2),
                      Catch::Matchers::ContainsSubstring("positive"));
  // Class ids must be inside the class table.
  REQUIRE_THROWS_WITH(parse_annotation("-1 0.5 0.5 0.2 0.2\n", 2),
                      Catch::Matchers::ContainsSubstring("out of range"));
  REQUIRE_THROWS_WITH(parse_annotation("2 0.5 0.5 0.2 0.2\n", 2),
                      Catch::Matchers::ContainsSubstring("out of range"));
  // A box entirely off the image cannot be clamped into existence.
  REQUIRE_THROWS_WITH(parse_annotation("0 1.5 0.5 0.2 0.2\n", 2),
                      Catch::Matchers::ContainsSubstring("outside"));
}

TEST_CASE("out-of-bounds boxes clamp with a warning") {
  std::vector<std::string> warnings;
  auto anns = parse_annotation("0 0.05 0.5 0.2 0.4\n", 2, "edge.txt", &warnings);
  REQUIRE(anns.size() == 1);
  REQUIRE(warnings.size() == 1);
  REQUIRE(warnings[0].find("edge.txt:1") != std::string::npos);
  // x extent [−0.05, 0.15] clamps to [0, 0.15]: center 0.075, width 0.15.
  REQUIRE(anns[0].cx == Catch::Approx(0.075));
  REQUIRE(anns[0].w == Catch::Approx(0.15));
  REQUIRE(anns[0].cy == 0.5);

  warnings.clear();
  parse_annotation("0 0.5 0.5 0.2 0.4\n", 2, "ok.txt", &warnings);
  REQUIRE(warnings.empty());
}

TEST_CASE("manifest fixture loads with tags and existing files") {
  DatasetManifest manifest = load_manifest(kFixtures / "dataset" / "manifest.tsv");
  REQUIRE(manifest.entries.size() == 4);
  REQUIRE(manifest.num_classes() == 2);
  REQUIRE(manifest.entries[0].image_id == "f0");
  REQUIRE(manifest.entries[0].tags.empty());
  REQUIRE(manifest.entries[1].has_tag("hot-bg"));
  REQUIRE(manifest.entries[2].has_tag("night"));
  REQUIRE(manifest.entries[2].has_tag("hot-bg"));
  REQUIRE_FALSE(manifest.entries[3].has_tag("hot-bg"));
}

TEST_CASE("manifest loading rejects missing files and duplicates") {
  const auto dir = std::filesystem::temp_directory_path() / "ltv_manifest_bad";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.tsv");
    m << "missing.pgm\tmissing.txt\n";
  }
  REQUIRE_THROWS_WITH(load_manifest(dir / "manifest.tsv"),
                      Catch::Matchers::ContainsSubstring("missing image file"));
  write_pgm(make_frame(4, 4, 0.5f), (dir / "a.pgm").string());
  {
    std::ofstream l(dir / "a.txt");
    l << "";
  }
  {
    std::ofstream m(dir / "manifest.tsv");
    m << "a.pgm\ta.txt\na.pgm\ta.txt\n";
  }
  REQUIRE_THROWS_WITH(load_manifest(dir / "manifest.tsv"),
                      Catch::Matchers::ContainsSubstring("duplicate image id"));
  {
    std::ofstream m(dir / "manifest.tsv");
    m << "only-one-field\n";
  }
  REQUIRE_THROWS_AS(load_manifest(dir / "manifest.tsv"), ParseError);
  REQUIRE_THROWS_AS(load_manifest(dir / "nonexistent.tsv"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("samples load frames and scale boxes to pixels") {
  DatasetManifest manifest = load_manifest(kFixtures / "dataset" / "manifest.tsv");
  LoadedSample s0 = load_sample(manifest, 0);
  REQUIRE(s0.frame.width == 16);
  REQUIRE(s0.frame.height == 12);
  REQUIRE(s0.boxes.size() == 1);
  // "0 0.5 0.5 0.25 0.5" on a 16x12 frame.
  REQUIRE(s0.boxes[0].cx == Catch::Approx(8.0));
  REQUIRE(s0.boxes[0].cy == Catch::Approx(6.0));
  REQUIRE(s0.boxes[0].w == Catch::Approx(4.0));
  REQUIRE(s0.boxes[0].h == Catch::Approx(6.0));
  REQUIRE(s0.corners[0].box.x1 == Catch::Approx(6.0));
  REQUIRE(s0.corners[0].class_id == 0);

  LoadedSample s2 = load_sample(manifest, 2);
  REQUIRE(s2.boxes.empty());  // negative image
  REQUIRE_THROWS_AS(load_sample(manifest, 99), ValidationError);
}

TEST_CASE("stratified folds partition the dataset with balanced classes") {
  const auto manifest_path = write_synthetic_dataset("ltv_folds_ds", 30, 30);
  DatasetManifest manifest = load_manifest(manifest_path);
  FoldSplit split = make_folds(manifest, 10, 42);
  REQUIRE(split.folds.size() == 10);

  std::set<std::string> seen;
  for (const auto& fold : split.folds) {
    REQUIRE(fold.size() == 6);  // 60 images over 10 folds
    for (const std::string& id : fold) REQUIRE(seen.insert(id).second);
  }
  REQUIRE(seen.size() == 60);

  // 50:50 global ratio: every fold must stay within ±10% of 0.5.
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    const double ratio = fold_child_ratio(split, f, 30);
    REQUIRE(ratio >= 0.4);
    REQUIRE(ratio <= 0.6);
  }

  FoldSplit again = make_folds(manifest, 10, 42);
  REQUIRE(again.folds == split.folds);
  FoldSplit other = make_folds(manifest, 10, 43);
  REQUIRE(other.folds != split.folds);

  REQUIRE_THROWS_AS(make_folds(manifest, 61, 1), ValidationError);
  REQUIRE_THROWS_AS(make_folds(manifest, 0, 1), ValidationError);
}

TEST_CASE("fold files round trip and partition checks fire on tampering") {
  const auto manifest_path = write_synthetic_dataset("ltv_folds_io", 10, 10);
  DatasetManifest manifest = load_manifest(manifest_path);
  FoldSplit split = make_folds(manifest, 5, 7);
  const auto dir = std::filesystem::temp_directory_path() / "ltv_folds_out";
  std::filesystem::remove_all(dir);
  write_folds(split, dir);
  for (int f = 0; f < 5; ++f)
    REQUIRE(std::filesystem::exists(dir / ("fold_" + std::to_string(f) + ".txt")));
  FoldSplit loaded = load_folds(dir, 5, manifest);
  REQUIRE(loaded.folds == split.folds);

  // Duplicate an id across folds: disjointness check fires.
  {
    std::ofstream f0(dir / "fold_0.txt", std::ios::app);
    f0 << split.folds[1][0] << "\n";
  }
  REQUIRE_THROWS_WITH(load_folds(dir, 5, manifest),
                      Catch::Matchers::ContainsSubstring("appears in fold"));
  write_folds(split, dir);  // restore

  // Remove an id: coverage check fires.
  {
    std::ofstream f0(dir / "fold_0.txt", std::ios::trunc);
    for (std::size_t i = 1; i < split.folds[0].size(); ++i) f0 << split.folds[0][i] << "\n";
  }
  REQUIRE_THROWS_WITH(load_folds(dir, 5, manifest),
                      Catch::Matchers::ContainsSubstring("missing from folds"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty config text yields the default long-protocol preset") {
  RunConfig cfg = parse_config("");
  REQUIRE(cfg.train.epochs == 200);
  REQUIRE(cfg.train.batch_size == 16);
  REQUIRE(cfg.train.weight_decay == 5e-4);
  REQUIRE(cfg.loss.lambda_loc == 5.0);
  REQUIRE(cfg.aug.hflip_p == 0.5);
  REQUIRE(cfg.aug.mosaic_p == 1.0);
  REQUIRE(cfg.model.num_classes == 2);
}

TEST_CASE("config assignments parse with comments and override presets") {
  RunConfig cfg = parse_config(
      "# protocol\n"
      "preset = short\n"
      "lambda_loc = 5\n"
      "epochs = 40   # trimmed for the smoke test\n"
      "stage_channels = 8,16,32,64\n"
      "seed = 9\n");
  REQUIRE(cfg.train.epochs == 40);      // explicit key beats the preset
  REQUIRE(cfg.train.batch_size == 32);  // from the short preset
  REQUIRE(cfg.loss.lambda_loc == 5.0);
  REQUIRE(cfg.model.stage_channels == std::array<std::int64_t, 4>{8, 16, 32, 64});
  REQUIRE(cfg.train.seed == 9);

  // Preset applies first even when written after the keys it would clobber.
  RunConfig late = parse_config("epochs = 40\npreset = short\n");
  REQUIRE(late.train.epochs == 40);
}

TEST_CASE("config rejects unknown keys, bad types, and bad values") {
  REQUIRE_THROWS_WITH(parse_config("does_not_exist = 3\n"),
                      Catch::Matchers::ContainsSubstring("does_not_exist"));
  REQUIRE_THROWS_WITH(parse_config("epochs = soon\n"),
                      Catch::Matchers::ContainsSubstring("epochs"));
  REQUIRE_THROWS_WITH(parse_config("lr = fast\n"),
                      Catch::Matchers::ContainsSubstring("lr"));
  REQUIRE_THROWS_AS(parse_config("epochs = -1\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config("just some words\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config("preset = medium\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_config("hflip_p = 1.5\n"), ValidationError);
}

TEST_CASE("config serialization round trips exactly") {
  RunConfig cfg = parse_config(
      "preset = short\nlambda_loc = 2.5\nlr = 0.00125\nstage_blocks = 1,1,2,1\n"
      "temp_bias_p = 0.35\naug_seed = 77\n");
  const std::string text = serialize_config(cfg);
  RunConfig back = parse_config(text);
  REQUIRE(serialize_config(back) == text);
  REQUIRE(back.train.learning_rate == cfg.train.learning_rate);
  REQUIRE(back.train.epochs == cfg.train.epochs);
  REQUIRE(back.loss.lambda_loc == cfg.loss.lambda_loc);
  REQUIRE(back.aug.temp_bias_p == cfg.aug.temp_bias_p);
  REQUIRE(back.model.blocks_per_stage == cfg.model.blocks_per_stage);

  // Sorted keys: serialized lines are in non-decreasing order.
  std::istringstream lines(text);
  std::string prev, line;
  while (std::getline(lines, line)) {
    REQUIRE(prev <= line);
    prev = line;
  }
}
