#include <catch2/catch_amalgamated.hpp>

#include "ltv/box.hpp"
#include "ltv/conv.hpp"
#include "ltv/ops.hpp"
#include "oracles.hpp"

using namespace ltv;

namespace {

// Sum-weighted scalar head so the checked op sees a generic upstream gradient.
double weighted_sum(const TensorD& t, const TensorD& w) {
  double s = 0;
  for (std::size_t i = 0; i < t.data.size(); ++i) s += t.data[i] * w.data[i];
  return s;
}

constexpr double kTol = 1e-5;  // per-op tolerance, f64, h = 1e-5

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(2024);
  oracle::FiniteDiff fd;
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t groups = (trial % 4 == 0) ? 2 : 1;
    const std::int64_t cin = groups * (1 + rng.uniform_index(2));
    const std::int64_t cout = groups * (1 + rng.uniform_index(2));
    ConvParams<double> p;
    p.kernel = oracle::random_tensor<double>(rng, cout, cin / groups, 3, 3);
    p.bias.resize(cout);
    for (auto& b : p.bias) b = rng.uniform(-0.5, 0.5);
    p.groups = groups;
    p.pad_h = p.pad_w = 1;
    p.stride_h = p.stride_w = (trial % 2) + 1;
    auto x = oracle::random_tensor<double>(rng, 1, cin, 5, 5);
    auto w = oracle::random_tensor<double>(rng, 1, cout, p.out_h(5), p.out_w(5));

    TensorD gx, gk;
    std::vector<double> gb;
    conv2d_backward(x, p, w, &gx, &gk, &gb);

    auto eval = [&] { return weighted_sum(conv2d(x, p), w); };
    auto fd_x = fd.gradient(
        x.data.size(), [&](std::size_t i) { return x.data[i]; },
        [&](std::size_t i, double v) { x.data[i] = v; }, eval);
    for (std::size_t i = 0; i < fd_x.size(); ++i)
      REQUIRE(oracle::rel_err(gx.data[i], fd_x[i]) < kTol);

    auto fd_k = fd.gradient(
        p.kernel.data.size(), [&](std::size_t i) { return p.kernel.data[i]; },
        [&](std::size_t i, double v) { p.kernel.data[i] = v; }, eval);
    for (std::size_t i = 0; i < fd_k.size(); ++i)
      REQUIRE(oracle::rel_err(gk.data[i], fd_k[i]) < kTol);

    auto fd_b = fd.gradient(
        p.bias.size(), [&](std::size_t i) { return p.bias[i]; },
        [&](std::size_t i, double v) { p.bias[i] = v; }, eval);
    for (std::size_t i = 0; i < fd_b.size(); ++i)
      REQUIRE(oracle::rel_err(gb[i], fd_b[i]) < kTol);
  }
}

TEST_CASE("conv2d gradient on 1x2x5x5 input vs finite differences, tight") {
  Rng rng(7);
  oracle::FiniteDiff fd;
  ConvParams<double> p;
  p.kernel = oracle::random_tensor<double>(rng, 2, 2, 3, 3);
  p.pad_h = p.pad_w = 1;
  auto x = oracle::random_tensor<double>(rng, 1, 2, 5, 5);
  auto w = oracle::random_tensor<double>(rng, 1, 2, 5, 5);
  TensorD gx;
  conv2d_backward(x, p, w, &gx, nullptr, nullptr);
  auto eval = [&] { return weighted_sum(conv2d(x, p), w); };
  auto fd_x = fd.gradient(
      x.data.size(), [&](std::size_t i) { return x.data[i]; },
      [&](std::size_t i, double v) { x.data[i] = v; }, eval);
  for (std::size_t i = 0; i < fd_x.size(); ++i)
    REQUIRE(oracle::rel_err(gx.data[i], fd_x[i], 1e-3) < 1e-6);
}

TEST_CASE("depthwise and pointwise gradients match finite differences") {
  Rng rng(31);
  oracle::FiniteDiff fd;
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t c = 2 + rng.uniform_index(3);
    ConvParams<double> dw;
    dw.kernel = oracle::random_tensor<double>(rng, c, 1, 3, 3);
    dw.groups = c;
    dw.pad_h = dw.pad_w = 1;
    auto x = oracle::random_tensor<double>(rng, 1, c, 4, 4);
    auto w = oracle::random_tensor<double>(rng, 1, c, 4, 4);
    TensorD gx, gk;
    conv2d_backward(x, dw, w, &gx, &gk, nullptr);
    auto eval = [&] { return weighted_sum(depthwise_conv2d(x, dw), w); };
    auto fd_k = fd.gradient(
        dw.kernel.data.size(), [&](std::size_t i) { return dw.kernel.data[i]; },
        [&](std::size_t i, double v) { dw.kernel.data[i] = v; }, eval);
    for (std::size_t i = 0; i < fd_k.size(); ++i)
      REQUIRE(oracle::rel_err(gk.data[i], fd_k[i]) < kTol);

    ConvParams<double> pw;
    pw.kernel = oracle::random_tensor<double>(rng, 2, c, 1, 1);
    TensorD gx2, gk2;
    auto w2 = oracle::random_tensor<double>(rng, 1, 2, 4, 4);
    conv2d_backward(x, pw, w2, &gx2, &gk2, nullptr);
    auto eval2 = [&] { return weighted_sum(pointwise_conv2d(x, pw), w2); };
    auto fd_x2 = fd.gradient(
        x.data.size(), [&](std::size_t i) { return x.data[i]; },
        [&](std::size_t i, double v) { x.data[i] = v; }, eval2);
    for (std::size_t i = 0; i < fd_x2.size(); ++i)
      REQUIRE(oracle::rel_err(gx2.data[i], fd_x2[i]) < kTol);
  }
}

TEST_CASE("batch_norm train-mode gradients match finite differences") {
  Rng rng(55);
  oracle::FiniteDiff fd;
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t c = 1 + rng.uniform_index(3);
    auto x = oracle::random_tensor<double>(rng, 2, c, 3, 4, -2.0, 2.0);
    auto w = oracle::random_tensor<double>(rng, 2, c, 3, 4);
    BatchNormParams<double> bn(c);
    for (auto& g : bn.gamma) g = rng.uniform(0.5, 1.5);
    for (auto& b : bn.beta) b = rng.uniform(-0.5, 0.5);

    auto eval = [&] {
      BatchNormParams<double> local = bn;  // keep running stats untouched
      return weighted_sum(batch_norm(x, local, BnMode::train), w);
    };
    BatchNormParams<double> scratch = bn;
    BnContext<double> ctx;
    batch_norm(x, scratch, BnMode::train, &ctx);
    TensorD gx;
    std::vector<double> gg, gb;
    batch_norm_backward(w, bn, ctx, &gx, &gg, &gb);

    auto fd_x = fd.gradient(
        x.data.size(), [&](std::size_t i) { return x.data[i]; },
        [&](std::size_t i, double v) { x.data[i] = v; }, eval);
    for (std::size_t i = 0; i < fd_x.size(); ++i)
      REQUIRE(oracle::rel_err(gx.data[i], fd_x[i]) < kTol);
    auto fd_g = fd.gradient(
        bn.gamma.size(), [&](std::size_t i) { return bn.gamma[i]; },
        [&](std::size_t i, double v) { bn.gamma[i] = v; }, eval);
    for (std::size_t i = 0; i < fd_g.size(); ++i)
      REQUIRE(oracle::rel_err(gg[i], fd_g[i]) < kTol);
    auto fd_b = fd.gradient(
        bn.beta.size(), [&](std::size_t i) { return bn.beta[i]; },
        [&](std::size_t i, double v) { bn.beta[i] = v; }, eval);
    for (std::size_t i = 0; i < fd_b.size(); ++i)
      REQUIRE(oracle::rel_err(gb[i], fd_b[i]) < kTol);
  }
}

TEST_CASE("silu and sigmoid derivatives match finite differences") {
  Rng rng(77);
  oracle::FiniteDiff fd;
  for (int trial = 0; trial < 20; ++trial) {
    const double x0 = rng.uniform(-4.0, 4.0);
    {
      double x = x0;
      auto g = fd.gradient(
          1, [&](std::size_t) { return x; }, [&](std::size_t, double v) { x = v; },
          [&] { return x * sigmoid(x); });
      REQUIRE(oracle::rel_err(silu_grad(x0), g[0]) < kTol);
    }
    {
      double x = x0;
      auto g = fd.gradient(
          1, [&](std::size_t) { return x; }, [&](std::size_t, double v) { x = v; },
          [&] { return sigmoid(x); });
      const double s = sigmoid(x0);
      REQUIRE(oracle::rel_err(s * (1.0 - s), g[0]) < kTol);
    }
  }
}

TEST_CASE("upsample backward matches finite differences") {
  Rng rng(13);
  oracle::FiniteDiff fd;
  auto x = oracle::random_tensor<double>(rng, 1, 2, 3, 3);
  auto w = oracle::random_tensor<double>(rng, 1, 2, 6, 6);
  auto gi = upsample_nearest_2x_backward(w);
  auto fd_x = fd.gradient(
      x.data.size(), [&](std::size_t i) { return x.data[i]; },
      [&](std::size_t i, double v) { x.data[i] = v; },
      [&] { return weighted_sum(upsample_nearest_2x(x), w); });
  for (std::size_t i = 0; i < fd_x.size(); ++i)
    REQUIRE(oracle::rel_err(gi.data[i], fd_x[i]) < kTol);
}

TEST_CASE("ciou gradient matches finite differences") {
  Rng rng(404);
  oracle::FiniteDiff fd;
  for (int trial = 0; trial < 40; ++trial) {
    double box[4] = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.4, 4.0),
                     rng.uniform(0.4, 4.0)};
    const double gcx = rng.uniform(-3, 3), gcy = rng.uniform(-3, 3);
    const double gw = rng.uniform(0.4, 4.0), gh = rng.uniform(0.4, 4.0);
    double an[4];
    ciou_loss_grad(box[0], box[1], box[2], box[3], gcx, gcy, gw, gh, &an[0], &an[1], &an[2],
                   &an[3]);
    auto g = fd.gradient(
        4, [&](std::size_t i) { return box[i]; }, [&](std::size_t i, double v) { box[i] = v; },
        [&] { return ciou_loss(box[0], box[1], box[2], box[3], gcx, gcy, gw, gh); });
    for (int i = 0; i < 4; ++i) REQUIRE(oracle::rel_err(an[i], g[i]) < kTol);
  }
}
