#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "encfree/autonet/loss.hpp"
#include "encfree/autonet/network.hpp"
#include "encfree/latents/latent_table.hpp"
#include "encfree/numkit/rng.hpp"

namespace encfree::latents {

// How the reconstruction loss is reduced before differentiating it with
// respect to the latents. sample_sum descends each sample's own summed loss
// sum_i L(x_i, g(z)_i), so a latent's step does not depend on batch size or
// input dimension. batch_mean descends the reported mean loss directly.
enum class Reduction { sample_sum, batch_mean };

inline std::string to_string(Reduction r) { return r == Reduction::sample_sum ? "sample_sum" : "batch_mean"; }

inline Reduction parse_reduction(const std::string& s) {
  if (s == "sample_sum") return Reduction::sample_sum;
  if (s == "batch_mean") return Reduction::batch_mean;
  throw ParameterError("unknown latent reduction '" + s + "' (expected sample_sum or batch_mean)");
}

// Factor turning the input gradient of the mean batch loss into the latent
// gradient for the chosen reduction.
inline double latent_grad_scale(Reduction r, const Tensor& output) {
  return r == Reduction::sample_sum ? static_cast<double>(output.size()) : 1.0;
}

struct InferenceConfig {
  autonet::LossKind loss = autonet::LossKind::mse;
  std::size_t steps = 500;
  double lr = 0.01;
  double momentum = 0.9;
  double init_scale = 0.1;
  std::size_t restarts = 1;
  std::size_t batch_size = 256;  // samples solved together; results do not depend on it
  Reduction reduction = Reduction::sample_sum;
};

struct InferenceResult {
  Tensor z;                          // [batch, m]
  std::vector<double> final_losses;  // per sample, best restart
  std::vector<double> loss_trace;    // mean loss before each step and after the last (first restart)
};

// Test-time representation search: gradient descent on z alone against a
// frozen decoder. Each sample's initialization comes from its own stream
// derived from one draw of rng, so results are independent of batching.
inline InferenceResult infer_latents(const autonet::Network& decoder, const Tensor& x, const InferenceConfig& cfg,
                                     numkit::Rng& rng) {
  if (!decoder.frozen()) throw ContractError("infer_latents: decoder must be frozen");
  if (cfg.restarts == 0) throw ParameterError("infer_latents: restarts must be >= 1");
  if (!(cfg.init_scale >= 0.0)) throw ParameterError("infer_latents: init_scale must be >= 0");
  optimize::validate(optimize::Hyper{optimize::Rule::sgd, cfg.lr, cfg.momentum});
  if (decoder.input_shape().size() != 1) throw ShapeError("infer_latents: decoder input must be a vector");
  if (x.rank() != decoder.output_shape().size() + 1 || x.tail_shape() != decoder.output_shape()) {
    throw ShapeError("infer_latents: data shape " + numkit::to_string(x.shape()) + " does not match decoder output");
  }

  const std::size_t n = x.rows();
  const std::size_t m = decoder.input_shape()[0];
  const std::size_t chunk = std::max<std::size_t>(1, cfg.batch_size);
  const numkit::Rng base(rng.next_u64());

  InferenceResult result{Tensor({n, m}), std::vector<double>(n, std::numeric_limits<double>::infinity()), {}};
  std::vector<double> trace_sum(cfg.steps + 1, 0.0);

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    const numkit::Rng restart_base = base.derive(restart);
    for (std::size_t begin = 0; begin < n; begin += chunk) {
      const std::size_t end = std::min(n, begin + chunk);
      const std::size_t b = end - begin;
      const Tensor xb = x.slice_rows(begin, end);
      Tensor z({b, m});
      for (std::size_t i = 0; i < b; ++i) {
        numkit::Rng sample_rng = restart_base.derive(begin + i);
        for (double& v : z.row(i)) v = sample_rng.normal(0.0, cfg.init_scale);
      }
      Tensor velocity({b, m});

      for (std::size_t step = 0; step <= cfg.steps; ++step) {
        auto [out, cache] = decoder.forward(z);
        const autonet::LossValue lv = autonet::compute_loss(cfg.loss, out, xb);
        if (!std::isfinite(lv.loss)) {
          throw DivergenceError("infer_latents: non-finite loss at step " + std::to_string(step));
        }
        if (restart == 0) trace_sum[step] += lv.loss * static_cast<double>(b);
        if (step == cfg.steps) {
          const std::vector<double> losses = autonet::per_sample_loss(cfg.loss, out, xb);
          for (std::size_t i = 0; i < b; ++i) {
            if (losses[i] < result.final_losses[begin + i]) {
              result.final_losses[begin + i] = losses[i];
              std::copy(z.row(i).begin(), z.row(i).end(), result.z.row(begin + i).begin());
            }
          }
          break;
        }
        Tensor out_grad = autonet::sum_loss_grad(cfg.loss, out, xb);
        if (cfg.reduction == Reduction::batch_mean) out_grad *= 1.0 / static_cast<double>(out.size());
        autonet::Gradients g = decoder.backward(cache, out_grad, /*want_param_grads=*/false);
        for (std::size_t i = 0; i < b; ++i) {
          optimize::sgd_step(z.row(i), g.input.row(i), velocity.row(i), cfg.lr, cfg.momentum, 0.0);
        }
      }
    }
  }
  if (n > 0)
    for (double& v : trace_sum) v /= static_cast<double>(n);
  result.loss_trace = std::move(trace_sum);
  return result;
}

}  // namespace encfree::latents
