#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ltv/errors.hpp"
#include "ltv/image.hpp"
#include "ltv/loss.hpp"
#include "ltv/rng.hpp"

namespace ltv {

/// Normalized center-format annotation: all coordinates are fractions of the
/// image dimensions, which keeps label files resolution-independent.
struct Annotation {
  std::string image_id;
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;
};

namespace detail {

inline double parse_decimal(const std::string& token, std::size_t line_no,
                            const std::string& source) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &consumed);
  } catch (const std::exception&) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": expected decimal, got '" +
                     token + "'");
  }
  if (consumed != token.size())
    throw ParseError(source + ":" + std::to_string(line_no) + ": trailing junk in '" + token +
                     "'");
  return value;
}

inline long parse_integer(const std::string& token, std::size_t line_no,
                          const std::string& source) {
  std::size_t consumed = 0;
  long value = 0;
  try {
    value = std::stol(token, &consumed);
  } catch (const std::exception&) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": expected integer, got '" +
                     token + "'");
  }
  if (consumed != token.size())
    throw ParseError(source + ":" + std::to_string(line_no) + ": trailing junk in '" + token +
                     "'");
  return value;
}

}  // namespace detail

/// One line per box: `class_id cx cy w h`, whitespace-separated decimals.
/// Boxes reaching outside [0,1] are clamped with a warning; degenerate boxes
/// are hard errors. An empty file is a valid negative image.
inline std::vector<Annotation> parse_annotation(const std::string& text, int num_classes,
                                                const std::string& source = "<memory>",
                                                std::vector<std::string>* warnings = nullptr) {
  std::vector<Annotation> out;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (fields >> tok) tokens.push_back(tok);
    if (tokens.size() != 5)
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(tokens.size()));
    Annotation a;
    const long cls = detail::parse_integer(tokens[0], line_no, source);
    if (cls < 0 || (num_classes > 0 && cls >= num_classes))
      throw ParseError(source + ":" + std::to_string(line_no) + ": class id " +
                       std::to_string(cls) + " out of range");
    a.class_id = static_cast<int>(cls);
    a.cx = detail::parse_decimal(tokens[1], line_no, source);
    a.cy = detail::parse_decimal(tokens[2], line_no, source);
    a.w = detail::parse_decimal(tokens[3], line_no, source);
    a.h = detail::parse_decimal(tokens[4], line_no, source);
    if (a.w <= 0.0 || a.h <= 0.0)
      throw ParseError(source + ":" + std::to_string(line_no) +
                       ": box width and height must be positive");

    // Clamp the extent to [0,1]; inside boxes keep their parsed values
    // exactly, clamped ones are restated in center form.
    const double rx1 = a.cx - a.w / 2, rx2 = a.cx + a.w / 2;
    const double ry1 = a.cy - a.h / 2, ry2 = a.cy + a.h / 2;
    if (rx1 < 0.0 || rx2 > 1.0 || ry1 < 0.0 || ry2 > 1.0) {
      const double x1 = std::clamp(rx1, 0.0, 1.0), x2 = std::clamp(rx2, 0.0, 1.0);
      const double y1 = std::clamp(ry1, 0.0, 1.0), y2 = std::clamp(ry2, 0.0, 1.0);
      if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0)
        throw ParseError(source + ":" + std::to_string(line_no) +
                         ": box lies outside the image");
      a = Annotation{a.image_id, a.class_id, (x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
      if (warnings)
        warnings->push_back(source + ":" + std::to_string(line_no) +
                            ": box clamped to the image bounds");
    }
    out.push_back(a);
  }
  return out;
}

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path image_path;
  std::filesystem::path annotation_path;
  std::vector<std::string> tags;

  bool has_tag(const std::string& tag) const {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
  }
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names{"child", "adult"};

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Tab-separated `image_path<TAB>annotation_path<TAB>tags(comma-list)`, the
/// tags field optional. Paths are relative to the manifest's directory and
/// must exist at load time.
inline DatasetManifest load_manifest(const std::filesystem::path& path,
                                     std::vector<std::string> class_names = {"child",
                                                                             "adult"}) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path.string());
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  manifest.class_names = std::move(class_names);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected image<TAB>annotation[<TAB>tags]");
    ManifestEntry entry;
    entry.image_path = manifest.root / fields[0];
    entry.annotation_path = manifest.root / fields[1];
    entry.image_id = std::filesystem::path(fields[0]).stem().string();
    if (fields.size() == 3 && !fields[2].empty()) {
      std::istringstream tags(fields[2]);
      std::string tag;
      while (std::getline(tags, tag, ','))
        if (!tag.empty()) entry.tags.push_back(tag);
    }
    if (!std::filesystem::exists(entry.image_path))
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": missing image file " +
                    entry.image_path.string());
    if (!std::filesystem::exists(entry.annotation_path))
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": missing annotation file " + entry.annotation_path.string());
    const auto [it, inserted] = seen_ids.emplace(entry.image_id, line_no);
    if (!inserted)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": duplicate image id '" +
                       entry.image_id + "' (first seen on line " + std::to_string(it->second) +
                       ")");
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

struct LoadedSample {
  std::string image_id;
  ThermalFrame frame;
  std::vector<GtBox> boxes;          // pixel center-form at native resolution
  std::vector<LabeledBox> corners;   // same boxes in corner form
  std::vector<std::string> tags;
};

inline std::vector<Annotation> load_annotations(const ManifestEntry& entry, int num_classes,
                                                std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(entry.annotation_path);
  if (!in)
    throw IoError("load_annotations: cannot open " + entry.annotation_path.string());
  std::ostringstream text;
  text << in.rdbuf();
  std::vector<Annotation> anns =
      parse_annotation(text.str(), num_classes, entry.annotation_path.string(), warnings);
  for (Annotation& a : anns) a.image_id = entry.image_id;
  return anns;
}

inline LoadedSample load_sample(const DatasetManifest& manifest, std::size_t index,
                                std::vector<std::string>* warnings = nullptr) {
  if (index >= manifest.entries.size())
    throw ValidationError("load_sample: index out of range");
  const ManifestEntry& entry = manifest.entries[index];
  LoadedSample sample;
  sample.image_id = entry.image_id;
  sample.tags = entry.tags;
  sample.frame = read_pgm(entry.image_path.string());
  const double W = static_cast<double>(sample.frame.width);
  const double H = static_cast<double>(sample.frame.height);
  for (const Annotation& a : load_annotations(entry, manifest.num_classes(), warnings)) {
    GtBox box;
    box.cx = a.cx * W;
    box.cy = a.cy * H;
    box.w = a.w * W;
    box.h = a.h * H;
    box.class_id = a.class_id;
    sample.boxes.push_back(box);
    sample.corners.push_back({BBox::from_center(box.cx, box.cy, box.w, box.h), a.class_id});
  }
  return sample;
}

struct FoldSplit {
  int k = 10;
  std::vector<std::vector<std::string>> folds;  // image ids per fold
};

/// Seeded stratified K-fold split. Images are bucketed by their class mix
/// (which classes appear and how many instances), each bucket is shuffled,
/// and buckets are dealt round-robin so every fold sees a similar mix.
inline FoldSplit make_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("make_folds: fold count must be >= 1");
  if (static_cast<std::size_t>(k) > manifest.entries.size())
    throw ValidationError("make_folds: fold count " + std::to_string(k) + " exceeds the " +
                          std::to_string(manifest.entries.size()) + "-image dataset");
  // Bucket key: per-class instance counts capped at 3, so rare heavy images
  // don't explode the bucket space.
  std::map<std::string, std::vector<std::string>> buckets;
  for (const ManifestEntry& entry : manifest.entries) {
    std::vector<int> counts(static_cast<std::size_t>(manifest.num_classes()), 0);
    for (const Annotation& a : load_annotations(entry, manifest.num_classes()))
      ++counts[static_cast<std::size_t>(a.class_id)];
    std::string key;
    for (int c : counts) key += std::to_string(std::min(c, 3)) + ",";
    buckets[key].push_back(entry.image_id);
  }
  FoldSplit split;
  split.k = k;
  split.folds.assign(static_cast<std::size_t>(k), {});
  Rng rng(derive_seed(seed, 0xf01d));
  std::size_t next_fold = 0;
  for (auto& [key, ids] : buckets) {
    rng.shuffle(ids);
    for (const std::string& id : ids) {
      split.folds[next_fold].push_back(id);
      next_fold = (next_fold + 1) % static_cast<std::size_t>(k);
    }
  }
  for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
  return split;
}

/// One `fold_k.txt` per fold, one image_id per line, written atomically.
inline void write_folds(const FoldSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    const std::filesystem::path target = dir / ("fold_" + std::to_string(f) + ".txt");
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw IoError("write_folds: cannot open " + tmp.string());
      for (const std::string& id : split.folds[f]) out << id << '\n';
      if (!out) throw IoError("write_folds: short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
  }
}

/// Reads fold files back and re-checks the partition invariants against the
/// manifest: folds are disjoint and cover the dataset exactly.
inline FoldSplit load_folds(const std::filesystem::path& dir, int k,
                            const DatasetManifest& manifest) {
  if (k < 1) throw ValidationError("load_folds: fold count must be >= 1");
  FoldSplit split;
  split.k = k;
  std::map<std::string, int> owner;
  for (int f = 0; f < k; ++f) {
    const std::filesystem::path path = dir / ("fold_" + std::to_string(f) + ".txt");
    std::ifstream in(path);
    if (!in) throw IoError("load_folds: cannot open " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto [it, inserted] = owner.emplace(line, f);
      if (!inserted)
        throw ValidationError("load_folds: image '" + line + "' appears in fold " +
                              std::to_string(it->second) + " and fold " + std::to_string(f));
      ids.push_back(line);
    }
    split.folds.push_back(std::move(ids));
  }
  for (const ManifestEntry& entry : manifest.entries)
    if (owner.find(entry.image_id) == owner.end())
      throw ValidationError("load_folds: image '" + entry.image_id + "' missing from folds");
  if (owner.size() != manifest.entries.size())
    throw ValidationError("load_folds: folds reference images not in the manifest");
  return split;
}

}  // namespace ltv
