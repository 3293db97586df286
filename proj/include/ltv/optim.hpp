#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ltv/errors.hpp"
#include "ltv/model.hpp"

namespace ltv {

enum class LrSchedule { cosine };

struct TrainConfig {
  double learning_rate = 1e-3;
  LrSchedule schedule = LrSchedule::cosine;
  double eta_min = 0.0;
  std::int64_t epochs = 200;
  std::int64_t batch_size = 16;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("train config: learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (weight_decay < 0) throw ConfigError("train config: weight_decay must be >= 0");
    if (eta_min < 0 || eta_min > learning_rate)
      throw ConfigError("train config: eta_min must lie in [0, learning_rate]");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw ConfigError("train config: betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("train config: adam_eps must be > 0");
  }
};

/// eta_min + (eta0 - eta_min) * (1 + cos(pi t / T)) / 2.
inline double cosine_lr(std::int64_t t, std::int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw ValidationError("cosine_lr: total_steps must be >= 1");
  if (t < 0 || t > total_steps) throw ValidationError("cosine_lr: step outside [0, T]");
  const double frac = static_cast<double>(t) / static_cast<double>(total_steps);
  return cfg.eta_min +
         0.5 * (cfg.learning_rate - cfg.eta_min) * (1.0 + std::cos(frac * 3.14159265358979323846));
}

/// Per-parameter first/second moment buffers, laid out to match the model's
/// registry order.
template <typename T>
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::int64_t step = 0;

  void init(Model<T>& model) {
    m.clear();
    v.clear();
    for (auto& p : model.params()) {
      m.emplace_back(static_cast<std::size_t>(p.size), 0.0);
      v.emplace_back(static_cast<std::size_t>(p.size), 0.0);
    }
    step = 0;
  }
};

/// One bias-corrected Adam step over every learnable parameter. Weight decay
/// is decoupled: theta -= lr * wd * theta before the Adam delta. BN gains and
/// biases are exempt from decay, as is standard.
template <typename T>
void adam_step(Model<T>& model, AdamState<T>& state, double lr, const TrainConfig& cfg) {
  auto params = model.params();
  if (state.m.size() != params.size())
    throw StateError("adam_step: optimizer state does not match the model layout");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    if (!p.learnable) continue;
    const bool decay = cfg.weight_decay > 0 && p.dims.size() > 1;  // kernels only
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::int64_t i = 0; i < p.size; ++i) {
      const double g = static_cast<double>(p.grad[i]);
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient in " + p.name);
      double theta = static_cast<double>(p.data[i]);
      if (decay) theta -= lr * cfg.weight_decay * theta;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
      p.data[i] = static_cast<T>(theta);
    }
  }
}

}  // namespace ltv
