#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "encfree/data/dataset.hpp"
#include "encfree/numkit/rng.hpp"

namespace encfree::data {

// Sparse regulatory network: x_i = relu(sum_j a_ij w_ij z_j + eps_i) with
// gamma-distributed regulator levels z.
struct SimConfig {
  std::size_t n = 1000;  // expression dim
  std::size_t m = 100;   // regulator dim
  std::size_t n_train = 100;
  std::size_t n_test = 100;
  double connectivity = 0.1;
  double noise_sd = 0.2;
  double gamma_shape = 2.0;
  double gamma_scale = 1.0;
  double weight_lo = -1.0;
  double weight_hi = 1.0;
  std::uint64_t seed = 0;
};

inline void validate(const SimConfig& c) {
  if (c.m == 0 || !(c.m < c.n)) throw ConfigError("simulate: need 1 <= m < n");
  if (!(c.connectivity > 0.0 && c.connectivity <= 1.0)) throw ConfigError("simulate: connectivity must lie in (0, 1]");
  if (c.n_train == 0) throw ConfigError("simulate: n_train must be >= 1");
  numkit::validate(numkit::Normal{0.0, c.noise_sd});
  numkit::validate(numkit::Gamma{c.gamma_shape, c.gamma_scale});
  numkit::validate(numkit::Uniform{c.weight_lo, c.weight_hi});
}

struct SimDataset {
  Tensor x;          // [N, n], >= 0
  Tensor z_true;     // [N, m]
  Tensor adjacency;  // [n, m], 0/1
  Tensor weights;    // [n, m]
};

struct SimSplit {
  SimDataset train;
  SimDataset test;
};

// x = relu(z (A * W)^T + eps) for each row z.
inline Tensor generate_expression(const Tensor& z, const Tensor& adjacency, const Tensor& weights, double noise_sd,
                                  numkit::Rng& rng) {
  if (adjacency.shape() != weights.shape() || adjacency.rank() != 2) {
    throw ShapeError("generate_expression: A and W must be equal-shaped matrices");
  }
  if (z.rank() != 2 || z.cols() != adjacency.cols()) throw ShapeError("generate_expression: z has wrong width");
  numkit::validate(numkit::Normal{0.0, noise_sd});
  const std::size_t n = adjacency.rows();
  const std::size_t m = adjacency.cols();
  Tensor x({z.rows(), n});
  for (std::size_t s = 0; s < z.rows(); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < m; ++j) v += adjacency(i, j) * weights(i, j) * z(s, j);
      if (noise_sd > 0.0) v += rng.normal(0.0, noise_sd);
      x(s, i) = v > 0.0 ? v : 0.0;
    }
  }
  return x;
}

// Bernoulli adjacency with no empty rows or columns; offending rows/columns
// are redrawn whole, at most 100 rounds.
inline Tensor sample_adjacency(std::size_t n, std::size_t m, double connectivity, numkit::Rng& rng) {
  Tensor a = numkit::sample(rng, numkit::Bernoulli{connectivity}, {n, m});
  constexpr int kMaxRounds = 100;
  for (int round = 0;; ++round) {
    bool clean = true;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += a(i, j);
      if (s == 0.0) {
        clean = false;
        if (round < kMaxRounds)
          for (std::size_t j = 0; j < m; ++j) a(i, j) = rng.bernoulli(connectivity) ? 1.0 : 0.0;
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += a(i, j);
      if (s == 0.0) {
        clean = false;
        if (round < kMaxRounds)
          for (std::size_t i = 0; i < n; ++i) a(i, j) = rng.bernoulli(connectivity) ? 1.0 : 0.0;
      }
    }
    if (clean) return a;
    if (round >= kMaxRounds) {
      throw ConfigError("simulate: connectivity " + std::to_string(connectivity) +
                        " too low, adjacency still has empty rows/columns after 100 redraws");
    }
  }
}

// Train and test share A and W; Z and noise are drawn independently.
inline SimSplit simulate(const SimConfig& cfg) {
  validate(cfg);
  const numkit::Rng base(cfg.seed);
  numkit::Rng a_rng = base.derive(1);
  numkit::Rng w_rng = base.derive(2);
  const Tensor a = sample_adjacency(cfg.n, cfg.m, cfg.connectivity, a_rng);
  const Tensor w = numkit::sample(w_rng, numkit::Uniform{cfg.weight_lo, cfg.weight_hi}, {cfg.n, cfg.m});

  auto make = [&](std::size_t count, std::uint64_t stream) {
    numkit::Rng z_rng = base.derive(stream);
    numkit::Rng e_rng = base.derive(stream + 1);
    SimDataset d;
    d.z_true = numkit::sample(z_rng, numkit::Gamma{cfg.gamma_shape, cfg.gamma_scale}, {count, cfg.m});
    d.x = generate_expression(d.z_true, a, w, cfg.noise_sd, e_rng);
    d.adjacency = a;
    d.weights = w;
    return d;
  };
  return {make(cfg.n_train, 3), make(cfg.n_test, 5)};
}

inline Dataset to_dataset(const SimDataset& sim, std::uint64_t first_id = 0) {
  Dataset ds;
  ds.x = sim.x;
  ds.z_true = sim.z_true;
  ds.adjacency = sim.adjacency;
  ds.weights = sim.weights;
  ds.sample_ids.resize(sim.x.rows());
  std::iota(ds.sample_ids.begin(), ds.sample_ids.end(), first_id);
  ds.value_lo = 0.0;
  double hi = 0.0;
  for (double v : sim.x.values()) hi = std::max(hi, v);
  ds.value_hi = hi;
  return ds;
}

}  // namespace encfree::data
