#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ltv/augment.hpp"
#include "ltv/errors.hpp"
#include "ltv/loss.hpp"
#include "ltv/model.hpp"
#include "ltv/optim.hpp"

namespace ltv {

/// Everything a run needs, bundled so one config file drives the tools.
struct RunConfig {
  ModelConfig model = reference_config();
  TrainConfig train;
  LossWeights loss;
  AugmentationSpec aug;

  void validate() const {
    model.validate();
    train.validate();
    loss.validate();
    aug.validate();
  }
};

/// Training presets. "long" is the default protocol (200 epochs, batch 16,
/// weight decay 5e-4); "short" trades epochs for bigger batches.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "long") {
    cfg.train.epochs = 200;
    cfg.train.batch_size = 16;
    cfg.train.weight_decay = 5e-4;
  } else if (name == "short") {
    cfg.train.epochs = 100;
    cfg.train.batch_size = 32;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected 'short' or 'long')");
  }
}

namespace detail {

inline std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::int64_t config_int(const std::string& key, const std::string& value) {
  std::size_t consumed = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(value, &consumed);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected integer, got '" + value + "'");
  }
  if (consumed != value.size())
    throw ConfigError("key '" + key + "': expected integer, got '" + value + "'");
  return v;
}

inline double config_double(const std::string& key, const std::string& value) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &consumed);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected number, got '" + value + "'");
  }
  if (consumed != value.size())
    throw ConfigError("key '" + key + "': expected number, got '" + value + "'");
  return v;
}

template <std::size_t N>
std::array<std::int64_t, N> config_int_list(const std::string& key, const std::string& value) {
  std::vector<std::int64_t> items;
  std::istringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) items.push_back(config_int(key, trim(item)));
  if (items.size() != N)
    throw ConfigError("key '" + key + "': expected " + std::to_string(N) +
                      " comma-separated integers, got " + std::to_string(items.size()));
  std::array<std::int64_t, N> out{};
  std::copy(items.begin(), items.end(), out.begin());
  return out;
}

template <std::size_t N>
std::string join_ints(const std::array<std::int64_t, N>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

/// Full-precision float formatting so serialize -> parse round trips exactly.
inline std::string config_float_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// Applies one `key = value` assignment to the bundle. Shared by the config
/// parser and the CLI's `--set` overrides so both reject the same typos.
inline void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::config_double;
  using detail::config_int;
  using detail::config_int_list;
  if (key == "preset") {
    apply_preset(cfg, value);
  } else if (key == "input_channels") {
    cfg.model.input_channels = config_int(key, value);
  } else if (key == "stem_channels") {
    cfg.model.stem_channels = config_int(key, value);
  } else if (key == "stage_channels") {
    cfg.model.stage_channels = config_int_list<4>(key, value);
  } else if (key == "stage_blocks") {
    cfg.model.blocks_per_stage = config_int_list<4>(key, value);
  } else if (key == "fpn_channels") {
    cfg.model.fpn_channels = config_int(key, value);
  } else if (key == "num_classes") {
    cfg.model.num_classes = config_int(key, value);
  } else if (key == "strides") {
    cfg.model.strides = config_int_list<3>(key, value);
  } else if (key == "head_box_clamp") {
    cfg.model.head_box_clamp = config_double(key, value);
  } else if (key == "lr") {
    cfg.train.learning_rate = config_double(key, value);
  } else if (key == "eta_min") {
    cfg.train.eta_min = config_double(key, value);
  } else if (key == "epochs") {
    cfg.train.epochs = config_int(key, value);
  } else if (key == "batch_size") {
    cfg.train.batch_size = config_int(key, value);
  } else if (key == "weight_decay") {
    cfg.train.weight_decay = config_double(key, value);
  } else if (key == "beta1") {
    cfg.train.beta1 = config_double(key, value);
  } else if (key == "beta2") {
    cfg.train.beta2 = config_double(key, value);
  } else if (key == "adam_eps") {
    cfg.train.adam_eps = config_double(key, value);
  } else if (key == "seed") {
    cfg.train.seed = static_cast<std::uint64_t>(config_int(key, value));
  } else if (key == "lambda_obj") {
    cfg.loss.lambda_obj = config_double(key, value);
  } else if (key == "lambda_cls") {
    cfg.loss.lambda_cls = config_double(key, value);
  } else if (key == "lambda_loc") {
    cfg.loss.lambda_loc = config_double(key, value);
  } else if (key == "hflip_p") {
    cfg.aug.hflip_p = config_double(key, value);
  } else if (key == "brightness_contrast_limit") {
    cfg.aug.brightness_contrast_limit = config_double(key, value);
  } else if (key == "mosaic_p") {
    cfg.aug.mosaic_p = config_double(key, value);
  } else if (key == "fog_p") {
    cfg.aug.fog_p = config_double(key, value);
  } else if (key == "rain_p") {
    cfg.aug.rain_p = config_double(key, value);
  } else if (key == "temp_bias_p") {
    cfg.aug.temp_bias_p = config_double(key, value);
  } else if (key == "specular_p") {
    cfg.aug.specular_p = config_double(key, value);
  } else if (key == "cut_p") {
    cfg.aug.cut_p = config_double(key, value);
  } else if (key == "aug_seed") {
    cfg.aug.seed = static_cast<std::uint64_t>(config_int(key, value));
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

/// `key = value` lines with `#` comments. A `preset` line is applied first
/// (wherever it appears) so explicit keys in the same file override it.
/// Unknown keys and malformed values are rejected naming the key; an empty
/// file yields the defaults.
inline RunConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> assignments;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value`, got '" +
                        line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value`, got '" +
                        line + "'");
    assignments.emplace_back(key, value);
  }
  RunConfig cfg;
  for (const auto& [key, value] : assignments)
    if (key == "preset") apply_config_key(cfg, key, value);
  for (const auto& [key, value] : assignments)
    if (key != "preset") apply_config_key(cfg, key, value);
  cfg.validate();
  return cfg;
}

/// Sorted `key = value` lines covering every field, so serialize-then-parse
/// reproduces the config exactly and run records diff cleanly.
inline std::string serialize_config(const RunConfig& cfg) {
  using detail::config_float_str;
  std::map<std::string, std::string> kv;
  kv["input_channels"] = std::to_string(cfg.model.input_channels);
  kv["stem_channels"] = std::to_string(cfg.model.stem_channels);
  kv["stage_channels"] = detail::join_ints(cfg.model.stage_channels);
  kv["stage_blocks"] = detail::join_ints(cfg.model.blocks_per_stage);
  kv["fpn_channels"] = std::to_string(cfg.model.fpn_channels);
  kv["num_classes"] = std::to_string(cfg.model.num_classes);
  kv["strides"] = detail::join_ints(cfg.model.strides);
  kv["head_box_clamp"] = config_float_str(cfg.model.head_box_clamp);
  kv["lr"] = config_float_str(cfg.train.learning_rate);
  kv["eta_min"] = config_float_str(cfg.train.eta_min);
  kv["epochs"] = std::to_string(cfg.train.epochs);
  kv["batch_size"] = std::to_string(cfg.train.batch_size);
  kv["weight_decay"] = config_float_str(cfg.train.weight_decay);
  kv["beta1"] = config_float_str(cfg.train.beta1);
  kv["beta2"] = config_float_str(cfg.train.beta2);
  kv["adam_eps"] = config_float_str(cfg.train.adam_eps);
  kv["seed"] = std::to_string(cfg.train.seed);
  kv["lambda_obj"] = config_float_str(cfg.loss.lambda_obj);
  kv["lambda_cls"] = config_float_str(cfg.loss.lambda_cls);
  kv["lambda_loc"] = config_float_str(cfg.loss.lambda_loc);
  kv["hflip_p"] = config_float_str(cfg.aug.hflip_p);
  kv["brightness_contrast_limit"] = config_float_str(cfg.aug.brightness_contrast_limit);
  kv["mosaic_p"] = config_float_str(cfg.aug.mosaic_p);
  kv["fog_p"] = config_float_str(cfg.aug.fog_p);
  kv["rain_p"] = config_float_str(cfg.aug.rain_p);
  kv["temp_bias_p"] = config_float_str(cfg.aug.temp_bias_p);
  kv["specular_p"] = config_float_str(cfg.aug.specular_p);
  kv["cut_p"] = config_float_str(cfg.aug.cut_p);
  kv["aug_seed"] = std::to_string(cfg.aug.seed);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace ltv
