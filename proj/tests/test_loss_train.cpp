#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ltv/loss.hpp"
#include "ltv/model.hpp"
#include "ltv/optim.hpp"
#include "oracles.hpp"

using namespace ltv;

namespace {

RawPredictions<double> random_preds(Rng& rng, const ModelConfig& cfg, std::int64_t n,
                                    std::int64_t padded_h, std::int64_t padded_w) {
  RawPredictions<double> preds;
  for (int l = 0; l < 3; ++l)
    preds.push_back(oracle::random_tensor<double>(rng, n, cfg.head_channels(),
                                                  padded_h / cfg.strides[l],
                                                  padded_w / cfg.strides[l], -2.0, 2.0));
  return preds;
}

}  // namespace

TEST_CASE("bce hand values") {
  REQUIRE_THAT(bce_scalar(0.0, 0.5), Catch::Matchers::WithinAbs(std::log(2.0), 1e-9));
  REQUIRE_THAT(bce_scalar(0.0, 1.0), Catch::Matchers::WithinAbs(std::log(2.0), 1e-9));
  REQUIRE(bce_scalar(20.0, 1.0) < 1e-8);
  REQUIRE(bce_scalar(20.0, 1.0) > 0.0);
  REQUIRE_THAT(bce_grad(0.0, 1.0), Catch::Matchers::WithinAbs(-0.5, 1e-12));
  REQUIRE_THROWS_AS(bce_scalar(0.0, 1.5), ValidationError);
  REQUIRE_THROWS_AS(bce_scalar(0.0, -0.1), ValidationError);
}

TEST_CASE("bce matches finite differences") {
  Rng rng(12);
  oracle::FiniteDiff fd;
  for (int trial = 0; trial < 25; ++trial) {
    double z = rng.uniform(-6, 6);
    const double t = rng.uniform(0, 1);
    auto g = fd.gradient(
        1, [&](std::size_t) { return z; }, [&](std::size_t, double v) { z = v; },
        [&] { return bce_scalar(z, t); });
    REQUIRE(oracle::rel_err(bce_grad(z, t), g[0]) < 1e-5);
  }
}

TEST_CASE("bce_loss validates shapes and emptiness") {
  TensorD a(1, 1, 2, 2), b(1, 1, 2, 3);
  a.fill(0.0);
  b.fill(0.5);
  REQUIRE_THROWS_AS(bce_loss(a, b), ShapeError);
  TensorD t(1, 1, 2, 2);
  t.fill(0.5);
  REQUIRE_THAT(bce_loss(a, t), Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("assign_targets places the worked example") {
  const ModelConfig cfg = reference_config();
  std::vector<std::vector<GtBox>> batch{{GtBox{80, 64, 24, 40, 0}}};
  auto t = assign_targets<double>(batch, cfg, 128, 160);
  REQUIRE(t.positives.size() == 1);
  REQUIRE(t.positives[0].level == 0);
  REQUIRE(t.positives[0].i == 8);
  REQUIRE(t.positives[0].j == 10);
  REQUIRE(t.dropped == 0);
  REQUIRE(t.objectness[0].at(0, 0, 8, 10) == 1.0);
  double sum = 0;
  for (int l = 0; l < 3; ++l)
    for (double v : t.objectness[l].data) sum += v;
  REQUIRE(sum == 1.0);
}

TEST_CASE("assign_targets level selection by box scale") {
  const ModelConfig cfg = reference_config();
  std::vector<std::vector<GtBox>> batch{{
      GtBox{40, 40, 20, 20, 0},    // longest side 20 -> stride 8
      GtBox{200, 60, 70, 70, 0},   // 70 -> stride 16
      GtBox{100, 200, 150, 150, 1} // 150 -> stride 32
  }};
  auto t = assign_targets<double>(batch, cfg, 256, 256);
  REQUIRE(t.positives.size() == 3);
  REQUIRE(t.positives[0].level == 0);
  REQUIRE(t.positives[1].level == 1);
  REQUIRE(t.positives[2].level == 2);
}

TEST_CASE("assign_targets empty batch means empty masks") {
  const ModelConfig cfg = reference_config();
  std::vector<std::vector<GtBox>> batch{{}, {}};
  auto t = assign_targets<double>(batch, cfg, 64, 64);
  REQUIRE(t.positives.empty());
  for (int l = 0; l < 3; ++l)
    for (double v : t.objectness[l].data) REQUIRE(v == 0.0);
}

TEST_CASE("assign_targets collision escalates the smaller box") {
  const ModelConfig cfg = reference_config();
  std::vector<std::vector<GtBox>> batch{
      {GtBox{52, 52, 30, 30, 0}, GtBox{52, 52, 30, 30, 1}}};
  auto t = assign_targets<double>(batch, cfg, 128, 128);
  REQUIRE(t.positives.size() == 2);
  REQUIRE(t.positives[0].level == 0);
  REQUIRE(t.positives[1].level == 1);
  REQUIRE(t.dropped == 0);
  // First-placed identical box keeps its slot.
  REQUIRE(t.positives[0].box.class_id == 0);

  // The larger of two colliding boxes takes the fine cell.
  std::vector<std::vector<GtBox>> batch2{
      {GtBox{52, 52, 20, 20, 0}, GtBox{53, 53, 40, 40, 1}}};
  auto t2 = assign_targets<double>(batch2, cfg, 128, 128);
  REQUIRE(t2.positives[0].level == 0);
  REQUIRE(t2.positives[0].box.class_id == 1);
  REQUIRE(t2.positives[1].level == 1);
  REQUIRE(t2.positives[1].box.class_id == 0);
}

TEST_CASE("assign_targets drops boxes that run off the pyramid") {
  const ModelConfig cfg = reference_config();
  // Three boxes share every cell from stride 8 up: the third is dropped.
  std::vector<std::vector<GtBox>> batch{{GtBox{10, 10, 8, 8, 0}, GtBox{10, 10, 8, 8, 0},
                                         GtBox{10, 10, 8, 8, 0}, GtBox{10, 10, 8, 8, 0}}};
  auto t = assign_targets<double>(batch, cfg, 64, 64);
  REQUIRE(t.positives.size() == 3);
  REQUIRE(t.dropped == 1);
}

TEST_CASE("assign_targets rejects zero-area boxes") {
  const ModelConfig cfg = reference_config();
  std::vector<std::vector<GtBox>> batch{{GtBox{10, 10, 0, 5, 0}}};
  REQUIRE_THROWS_AS(assign_targets<double>(batch, cfg, 64, 64), ValidationError);
}

TEST_CASE("composite_loss with no positives reduces to the objectness term") {
  ModelConfig cfg = reference_config();
  Rng rng(3);
  auto preds = random_preds(rng, cfg, 1, 64, 64);
  auto targets = assign_targets<double>({{}}, cfg, 64, 64);
  LossWeights w;
  auto breakdown = composite_loss(preds, targets, cfg, w);
  REQUIRE(breakdown.cls == 0.0);
  REQUIRE(breakdown.loc == 0.0);
  REQUIRE_THAT(breakdown.total, Catch::Matchers::WithinAbs(w.lambda_obj * breakdown.obj, 1e-15));
}

TEST_CASE("composite_loss total composes the three terms") {
  ModelConfig cfg = reference_config();
  Rng rng(5);
  auto preds = random_preds(rng, cfg, 2, 64, 96);
  std::vector<std::vector<GtBox>> batch{{GtBox{20, 20, 16, 30, 0}, GtBox{70, 40, 70, 66, 1}},
                                        {GtBox{48, 30, 140, 140, 0}}};
  auto targets = assign_targets<double>(batch, cfg, 64, 96);
  REQUIRE(targets.positives.size() == 3);
  LossWeights w;
  auto b = composite_loss(preds, targets, cfg, w);
  REQUIRE_THAT(b.total, Catch::Matchers::WithinAbs(b.obj + b.cls + 5.0 * b.loc, 1e-12));

  // Scaling every lambda by k scales the total by exactly k.
  LossWeights w3{3.0, 3.0, 15.0};
  auto b3 = composite_loss(preds, targets, cfg, w3);
  REQUIRE_THAT(b3.total, Catch::Matchers::WithinAbs(3.0 * b.total, 1e-12));
  REQUIRE(b3.obj == b.obj);
  REQUIRE(b3.cls == b.cls);
  REQUIRE(b3.loc == b.loc);
}

TEST_CASE("composite_loss vanishes on saturated perfect predictions") {
  ModelConfig cfg = reference_config();
  std::vector<std::vector<GtBox>> batch{{GtBox{33, 29, 24, 40, 1}}};
  auto targets = assign_targets<double>(batch, cfg, 64, 64);
  REQUIRE(targets.positives.size() == 1);
  const auto& a = targets.positives[0];

  RawPredictions<double> preds;
  for (int l = 0; l < 3; ++l) {
    TensorD p(1, cfg.head_channels(), 64 / cfg.strides[l], 64 / cfg.strides[l]);
    p.fill(0.0);
    const std::int64_t hw = p.h() * p.w();
    for (std::int64_t i = 0; i < hw; ++i) p.plane(0, 4)[i] = -20.0;
    preds.push_back(std::move(p));
  }
  double tx, ty, tw, th;
  encode_cell(a.box.cx, a.box.cy, a.box.w, a.box.h, a.i, a.j,
              static_cast<double>(cfg.strides[a.level]), &tx, &ty, &tw, &th);
  auto& lvl = preds[static_cast<std::size_t>(a.level)];
  const std::int64_t cell = a.i * lvl.w() + a.j;
  lvl.plane(0, 0)[cell] = tx;
  lvl.plane(0, 1)[cell] = ty;
  lvl.plane(0, 2)[cell] = tw;
  lvl.plane(0, 3)[cell] = th;
  lvl.plane(0, 4)[cell] = 20.0;
  lvl.plane(0, 5)[cell] = -20.0;
  lvl.plane(0, 6)[cell] = 20.0;  // class 1

  auto b = composite_loss(preds, targets, cfg, LossWeights{});
  REQUIRE(b.total < 1e-6);
  REQUIRE(b.total >= 0.0);
}

TEST_CASE("composite_loss gradients match finite differences") {
  ModelConfig cfg = reference_config();
  Rng rng(31);
  oracle::FiniteDiff fd;
  std::vector<std::vector<GtBox>> batch{{GtBox{20, 20, 16, 30, 0}, GtBox{44, 28, 70, 66, 1}},
                                        {GtBox{30, 40, 150, 150, 0}}};
  auto targets = assign_targets<double>(batch, cfg, 64, 64);
  LossWeights w;
  for (int trial = 0; trial < 3; ++trial) {
    auto preds = random_preds(rng, cfg, 2, 64, 64);
    RawPredictions<double> grads;
    composite_loss(preds, targets, cfg, w, &grads);
    for (int l = 0; l < 3; ++l) {
      auto fd_g = fd.gradient(
          preds[l].data.size(), [&](std::size_t i) { return preds[l].data[i]; },
          [&](std::size_t i, double v) { preds[l].data[i] = v; },
          [&] { return composite_loss(preds, targets, cfg, w).total; });
      for (std::size_t i = 0; i < fd_g.size(); ++i)
        REQUIRE(oracle::rel_err(grads[l].data[i], fd_g[i]) < 1e-5);
    }
  }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.eta_min = 0.0;
  REQUIRE_THAT(cosine_lr(0, 100, cfg), Catch::Matchers::WithinAbs(1e-3, 1e-15));
  REQUIRE_THAT(cosine_lr(100, 100, cfg), Catch::Matchers::WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(cosine_lr(50, 100, cfg), Catch::Matchers::WithinAbs(5e-4, 1e-12));
  cfg.eta_min = 2e-4;
  REQUIRE_THAT(cosine_lr(100, 100, cfg), Catch::Matchers::WithinAbs(2e-4, 1e-15));
  REQUIRE_THAT(cosine_lr(50, 100, cfg), Catch::Matchers::WithinAbs(6e-4, 1e-12));
  REQUIRE_THROWS_AS(cosine_lr(0, 0, cfg), ValidationError);
  REQUIRE_THROWS_AS(cosine_lr(-1, 10, cfg), ValidationError);
  REQUIRE_THROWS_AS(cosine_lr(11, 10, cfg), ValidationError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  REQUIRE_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("adam first step moves by about lr, zero grad leaves params fixed") {
  ModelD m(micro_config());
  m.init(5);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  AdamState<double> state;
  state.init(m);

  auto params = m.params();
  std::vector<double> before;
  for (auto& p : params)
    for (std::int64_t i = 0; i < p.size; ++i) before.push_back(p.data[i]);

  for (auto& p : params)
    if (p.learnable)
      for (std::int64_t i = 0; i < p.size; ++i) p.grad[i] = 0.5;
  adam_step(m, state, 1e-3, cfg);

  std::size_t idx = 0;
  for (auto& p : m.params()) {
    for (std::int64_t i = 0; i < p.size; ++i, ++idx) {
      if (p.learnable) {
        REQUIRE_THAT(std::abs(p.data[i] - before[idx]),
                     Catch::Matchers::WithinAbs(1e-3, 1e-7));
        REQUIRE(p.data[i] < before[idx]);  // positive gradient moves down
      } else {
        REQUIRE(p.data[i] == before[idx]);
      }
    }
  }

  // Zero gradients, zero decay: bitwise no-op on a fresh state.
  ModelD m2(micro_config());
  m2.init(5);
  AdamState<double> s2;
  s2.init(m2);
  m2.zero_grads();
  std::vector<double> b2;
  for (auto& p : m2.params())
    for (std::int64_t i = 0; i < p.size; ++i) b2.push_back(p.data[i]);
  adam_step(m2, s2, 1e-3, cfg);
  idx = 0;
  for (auto& p : m2.params())
    for (std::int64_t i = 0; i < p.size; ++i, ++idx) REQUIRE(p.data[i] == b2[idx]);
}

TEST_CASE("adam aborts on non-finite gradients naming the parameter") {
  ModelD m(micro_config());
  m.init(5);
  TrainConfig cfg;
  AdamState<double> state;
  state.init(m);
  m.zero_grads();
  auto params = m.params();
  for (auto& p : params) {
    if (p.name == "backbone.s1.b0.pw.kernel") p.grad[0] = std::nan("");
  }
  REQUIRE_THROWS_WITH(adam_step(m, state, 1e-3, cfg),
                      Catch::Matchers::ContainsSubstring("backbone.s1.b0.pw.kernel"));
}

TEST_CASE("end-to-end parameter gradients match directional finite differences") {
  ModelD m(micro_config());
  m.init(77);
  const ModelConfig cfg = m.config();
  Rng rng(13);
  TensorD x = oracle::random_tensor<double>(rng, 2, 1, 64, 64, 0.0, 1.0);
  std::vector<std::vector<GtBox>> batch{{GtBox{20, 24, 18, 30, 0}},
                                        {GtBox{40, 32, 80, 70, 1}}};
  auto targets = assign_targets<double>(batch, cfg, 64, 64);
  LossWeights w;

  auto loss_of_model = [&]() {
    auto preds = m.forward(x, BnMode::train);
    return static_cast<double>(composite_loss(preds, targets, cfg, w).total);
  };

  m.zero_grads();
  typename ModelD::Tape tape;
  auto preds = m.forward(x, BnMode::train, &tape);
  RawPredictions<double> pred_grads;
  composite_loss(preds, targets, cfg, w, &pred_grads);
  m.backward(pred_grads, tape);

  // Random directional derivatives over the learnable parameters: analytic
  // dot(grad, d) vs central differences of the scalar loss along d.
  auto params = m.params();
  for (int dir = 0; dir < 4; ++dir) {
    std::vector<std::vector<double>> d(params.size());
    double analytic = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      if (!params[pi].learnable) continue;
      d[pi].resize(static_cast<std::size_t>(params[pi].size));
      for (std::int64_t i = 0; i < params[pi].size; ++i) {
        d[pi][i] = rng.normal();
        analytic += params[pi].grad[i] * d[pi][i];
      }
    }
    const double h = 1e-5;
    auto shift = [&](double eps) {
      for (std::size_t pi = 0; pi < params.size(); ++pi)
        for (std::size_t i = 0; i < d[pi].size(); ++i) params[pi].data[i] += eps * d[pi][i];
    };
    shift(h);
    const double up = loss_of_model();
    shift(-2 * h);
    const double down = loss_of_model();
    shift(h);
    const double numeric = (up - down) / (2 * h);
    REQUIRE(oracle::rel_err(analytic, numeric, 1e-3) < 1e-4);
  }
}

TEST_CASE("backward without a recorded forward is a state error") {
  ModelD m(micro_config());
  m.init(1);
  typename ModelD::Tape tape;
  RawPredictions<double> grads(3);
  REQUIRE_THROWS_AS(m.backward(grads, tape), StateError);
}
