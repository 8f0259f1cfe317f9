#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/rng.hpp"
#include "encfree/numkit/tensor.hpp"
#include "encfree/optimize/optimizers.hpp"

namespace encfree::latents {

using numkit::Tensor;

// One trainable representation per training sample. Row i belongs to
// sample_ids[i] for the lifetime of the table; shuffling only changes which
// rows a batch touches.
struct LatentTable {
  Tensor z;         // [N, m]
  Tensor velocity;  // [N, m], SGD momentum buffer per row
  std::vector<std::uint64_t> sample_ids;
  double lr = 0.01;
  double momentum = 0.9;

  std::size_t rows() const { return z.rows(); }
  std::size_t dim() const { return z.rank() == 2 ? z.cols() : 0; }
};

inline LatentTable init_latents(std::size_t n, std::size_t m, numkit::Rng& rng, double scale = 0.1,
                                double lr = 0.01, double momentum = 0.9) {
  if (n == 0 || m == 0) throw ParameterError("init_latents: N and m must be >= 1");
  if (!(scale >= 0.0)) throw ParameterError("init_latents: scale must be >= 0");
  optimize::validate(optimize::Hyper{optimize::Rule::sgd, lr, momentum});
  LatentTable t;
  t.z = numkit::sample(rng, numkit::Normal{0.0, scale}, {n, m});
  t.velocity = Tensor({n, m});
  t.sample_ids.resize(n);
  std::iota(t.sample_ids.begin(), t.sample_ids.end(), std::uint64_t{0});
  t.lr = lr;
  t.momentum = momentum;
  return t;
}

// SGD with per-row momentum on exactly the listed rows. Latents never get
// weight decay.
inline void latent_step(LatentTable& table, std::span<const std::size_t> rows, const Tensor& grads) {
  const std::size_t m = table.dim();
  if (rows.empty() && grads.empty()) return;
  if (grads.rank() != 2 || grads.rows() != rows.size() || (rows.size() > 0 && grads.cols() != m)) {
    throw ShapeError("latent_step: gradient shape " + numkit::to_string(grads.shape()) + " does not match " +
                     std::to_string(rows.size()) + " rows of dim " + std::to_string(m));
  }
  std::vector<bool> seen(table.rows(), false);
  for (std::size_t r : rows) {
    if (r >= table.rows()) throw ContractError("latent_step: row " + std::to_string(r) + " out of range");
    if (seen[r]) throw ContractError("latent_step: row " + std::to_string(r) + " appears twice in one batch");
    seen[r] = true;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    optimize::sgd_step(table.z.row(rows[i]), grads.row(i), table.velocity.row(rows[i]), table.lr, table.momentum,
                       0.0);
  }
}

}  // namespace encfree::latents
