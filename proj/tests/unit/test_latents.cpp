#include <gtest/gtest.h>

#include <cmath>

#include "encfree/latents/inference.hpp"
#include "encfree/latents/latent_table.hpp"
#include "encfree/numkit/linalg.hpp"
#include "test_support.hpp"

using namespace encfree;
using namespace encfree::latents;
using autonet::Dense;
using autonet::Network;
using numkit::Normal;
using numkit::Rng;
using numkit::sample;
using numkit::Tensor;

namespace {

// Largest eigenvalue of W^T W by power iteration (oracle, no library eig).
double lambda_max_gram(const Tensor& w) {
  const std::size_t n = w.rows(), m = w.cols();
  std::vector<double> v(m, 1.0), u(n), next(m);
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = 0.0;
      for (std::size_t j = 0; j < m; ++j) u[i] += w(i, j) * v[j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      next[j] = 0.0;
      for (std::size_t i = 0; i < n; ++i) next[j] += w(i, j) * u[i];
      norm += next[j] * next[j];
    }
    norm = std::sqrt(norm);
    double vv = 0.0;
    for (std::size_t j = 0; j < m; ++j) vv += v[j] * v[j];
    lambda = norm / std::sqrt(vv);
    for (std::size_t j = 0; j < m; ++j) v[j] = next[j] / norm;
  }
  return lambda;
}

Network frozen_linear(std::size_t m, std::size_t n, Rng& rng) {
  Network net({m}, {Dense{m, n}}, rng);
  net.params_mut()[0].value = sample(rng, Normal{0, 1}, {n, m});
  net.freeze();
  return net;
}

}  // namespace

TEST(InitLatents, ZeroScaleIsZero) {
  Rng rng(1);
  const LatentTable t = init_latents(5, 3, rng, 0.0);
  for (double v : t.z.values()) EXPECT_EQ(v, 0.0);
  for (double v : t.velocity.values()) EXPECT_EQ(v, 0.0);
}

TEST(InitLatents, Deterministic) {
  Rng a(9), b(9);
  EXPECT_EQ(init_latents(4, 2, a).z, init_latents(4, 2, b).z);
}

TEST(InitLatents, SampleSdNearScale) {
  Rng rng(2);
  const LatentTable t = init_latents(1000, 100, rng, 0.1);
  double s = 0, ss = 0;
  for (double v : t.z.values()) s += v, ss += v * v;
  const double n = double(t.z.size());
  const double sd = std::sqrt((ss - s * s / n) / (n - 1));
  EXPECT_LT(std::abs(sd - 0.1), 0.005);
  EXPECT_EQ(t.sample_ids.size(), 1000u);
  EXPECT_EQ(t.sample_ids[999], 999u);
}

TEST(InitLatents, RejectsEmpty) {
  Rng rng(3);
  EXPECT_THROW(init_latents(0, 3, rng), ParameterError);
  EXPECT_THROW(init_latents(3, 2, rng, -1.0), ParameterError);
}

TEST(LatentStep, EmptyBatchNoChange) {
  Rng rng(4);
  LatentTable t = init_latents(3, 2, rng);
  const Tensor before = t.z;
  latent_step(t, {}, Tensor({0, 2}));
  EXPECT_EQ(t.z, before);
}

TEST(LatentStep, SingleRowArithmetic) {
  Rng rng(5);
  LatentTable t = init_latents(3, 2, rng, 0.1, 0.5, 0.0);
  const Tensor before = t.z;
  const std::vector<std::size_t> rows{1};
  latent_step(t, rows, Tensor::matrix({{0.2, -0.4}}));
  EXPECT_DOUBLE_EQ(t.z(1, 0), before(1, 0) - 0.5 * 0.2);
  EXPECT_DOUBLE_EQ(t.z(1, 1), before(1, 1) + 0.5 * 0.4);
}

TEST(LatentStep, RowsOutsideBatchBitIdentical) {
  Rng rng(6);
  LatentTable t = init_latents(10, 4, rng);
  const Tensor before = t.z;
  const std::vector<std::size_t> rows{7, 2, 5};
  for (int step = 0; step < 5; ++step) latent_step(t, rows, sample(rng, Normal{0, 1}, {3, 4}));
  for (std::size_t r = 0; r < 10; ++r) {
    const bool in_batch = r == 7 || r == 2 || r == 5;
    for (std::size_t c = 0; c < 4; ++c) {
      if (in_batch) EXPECT_NE(t.z(r, c), before(r, c));
      else EXPECT_EQ(t.z(r, c), before(r, c));
    }
  }
}

TEST(LatentStep, DuplicateRowsRejected) {
  Rng rng(7);
  LatentTable t = init_latents(4, 2, rng);
  const std::vector<std::size_t> dup{1, 1};
  EXPECT_THROW(latent_step(t, dup, Tensor({2, 2}, 1.0)), ContractError);
  const std::vector<std::size_t> out_of_range{4};
  EXPECT_THROW(latent_step(t, out_of_range, Tensor({1, 2}, 1.0)), ContractError);
  const std::vector<std::size_t> one{0};
  EXPECT_THROW(latent_step(t, one, Tensor({1, 3}, 1.0)), ShapeError);
}

TEST(Inference, RequiresFrozenDecoder) {
  Rng rng(8);
  Network dec({2}, {Dense{2, 3}}, rng);
  EXPECT_THROW(infer_latents(dec, Tensor({1, 3}), InferenceConfig{}, rng), ContractError);
}

TEST(Inference, ZeroStepsReturnsInitialization) {
  Rng rng(9);
  const Network dec = frozen_linear(3, 5, rng);
  InferenceConfig cfg;
  cfg.steps = 0;
  const Tensor x = sample(rng, Normal{0, 1}, {4, 5});
  Rng a(77), b(77);
  const InferenceResult r = infer_latents(dec, x, cfg, a);
  // Same per-sample streams as the implementation contract: one draw, then
  // derive(restart), then derive(sample).
  const Rng base(b.next_u64());
  for (std::size_t i = 0; i < 4; ++i) {
    Rng s = base.derive(0).derive(i);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.z(i, j), s.normal(0.0, cfg.init_scale));
  }
}

TEST(Inference, RecoversLinearCodeInOutputSpace) {
  Rng rng(10);
  const std::size_t m = 3, n = 8;
  const Network dec = frozen_linear(m, n, rng);
  const Tensor z0 = sample(rng, Normal{0, 1}, {5, m});
  const Tensor x = dec.predict(z0);
  const Tensor& w = dec.params()[0].value;
  InferenceConfig cfg;
  cfg.momentum = 0.9;
  cfg.lr = 0.1 / lambda_max_gram(w);
  cfg.steps = 3000;
  const InferenceResult r = infer_latents(dec, x, cfg, rng);
  const Tensor diff = numkit::matmul(r.z - z0, numkit::transpose(w));
  EXPECT_LT(diff.frobenius_norm(), 1e-6 * x.frobenius_norm());
}

// With per-sample summed squared error the Hessian in z is 2 W^T W, so plain
// gradient descent is monotone for lr < 1 / lambda_max(W^T W), which is
// inside the 2 / lambda_max bound of the half-squared-error convention.
TEST(Inference, LossNonIncreasingBelowStepBound) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Network dec = frozen_linear(4, 12, rng);
    const Tensor x = sample(rng, Normal{0, 1}, {6, 12});
    InferenceConfig cfg;
    cfg.momentum = 0.0;
    cfg.lr = 0.95 / lambda_max_gram(dec.params()[0].value);
    cfg.steps = 200;
    const InferenceResult r = infer_latents(dec, x, cfg, rng);
    ASSERT_EQ(r.loss_trace.size(), cfg.steps + 1);
    for (std::size_t s = 1; s < r.loss_trace.size(); ++s)
      ASSERT_LE(r.loss_trace[s], r.loss_trace[s - 1] * (1 + 1e-12)) << "step " << s;
  }
}

TEST(Inference, DecoderUntouched) {
  Rng rng(12);
  Network dec({3}, {Dense{3, 6}, autonet::Relu{}, Dense{6, 4}}, rng);
  dec.freeze();
  const auto before = dec.checksum();
  InferenceConfig cfg;
  cfg.steps = 50;
  cfg.restarts = 2;
  infer_latents(dec, sample(rng, Normal{0, 1}, {5, 4}), cfg, rng);
  EXPECT_EQ(dec.checksum(), before);
}

TEST(Inference, DivergenceReportsStep) {
  Rng rng(13);
  const Network dec = frozen_linear(3, 6, rng);
  InferenceConfig cfg;
  cfg.lr = 1e3;
  cfg.momentum = 0.0;
  cfg.steps = 500;
  try {
    infer_latents(dec, sample(rng, Normal{0, 1}, {2, 6}), cfg, rng);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Inference, IndependentOfBatching) {
  Rng rng(14);
  Network dec({2}, {Dense{2, 5}, autonet::Sigmoid{}}, rng);
  dec.freeze();
  const Tensor x = sample(rng, numkit::Uniform{0, 1}, {7, 5});
  InferenceConfig cfg;
  cfg.loss = autonet::LossKind::mse;
  cfg.steps = 30;
  cfg.batch_size = 7;
  Rng a(5), b(5);
  const Tensor whole = infer_latents(dec, x, cfg, a).z;
  cfg.batch_size = 3;
  EXPECT_EQ(infer_latents(dec, x, cfg, b).z, whole);
}

// The latent gradient is the decoder's input gradient, rescaled to the
// per-sample summed loss. Oracle: finite differences of that sum.
TEST(Inference, LatentGradientMatchesFiniteDifferences) {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    Network dec({3}, {Dense{3, 5}, autonet::Sigmoid{}, Dense{5, 4}}, rng);
    dec.freeze();
    Tensor z = sample(rng, Normal{0, 1}, {2, 3});
    const Tensor x = sample(rng, Normal{0, 1}, {2, 4});
    const auto [out, cache] = dec.forward(z);
    const auto lv = autonet::mse_loss(out, x);
    Tensor g = dec.backward(cache, lv.grad, false).input;
    g *= latent_grad_scale(Reduction::sample_sum, out);
    const Tensor fd = testing_support::finite_difference(z, [&] {
      const Tensor y = dec.predict(z);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - x[i]) * (y[i] - x[i]);
      return s;
    });
    EXPECT_LT(testing_support::max_relative_error(g, fd), 1e-4);
  }
}
