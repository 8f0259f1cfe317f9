#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "encfree/analysis/correlation.hpp"
#include "encfree/autonet/loss.hpp"
#include "encfree/autonet/network.hpp"
#include "encfree/latents/inference.hpp"
#include "encfree/latents/latent_table.hpp"
#include "encfree/numkit/rng.hpp"
#include "encfree/optimize/optimizers.hpp"
#include "encfree/trainers/metrics.hpp"

namespace encfree::trainers {

using autonet::LossKind;
using autonet::Network;
using latents::LatentTable;
using numkit::Shape;
using numkit::Tensor;

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t shuffle_seed = 0;
  optimize::Hyper weights{};
  double latent_lr = 0.01;
  double latent_momentum = 0.9;
  double latent_init_scale = 0.1;
  latents::Reduction latent_reduction = latents::Reduction::sample_sum;
  LossKind loss = LossKind::mse;
  double noise_sd = 0.0;  // denoising trainer only
  std::optional<std::pair<double, double>> clamp;  // valid input range after noising
  std::size_t eval_every = 1;
  bool record_time = false;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw ParameterError("train: batch_size must be >= 1");
  if (cfg.eval_every == 0) throw ParameterError("train: eval_every must be >= 1");
  if (!(cfg.noise_sd >= 0.0)) throw ParameterError("train: noise_sd must be >= 0");
  if (cfg.clamp && !(cfg.clamp->first <= cfg.clamp->second)) throw ParameterError("train: clamp lo > hi");
  optimize::validate(cfg.weights);
  optimize::validate(optimize::Hyper{optimize::Rule::sgd, cfg.latent_lr, cfg.latent_momentum});
}

// Called after the metrics of an evaluated epoch are logged; lets callers
// append test-set records.
using EpochHook = std::function<void(std::size_t epoch, MetricsLog& log)>;

// Sample order of one epoch, a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  numkit::Rng rng = numkit::Rng(seed).derive(epoch);
  return rng.permutation(n);
}

namespace detail {

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void require_finite(double loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(batch));
  }
}

inline void require_data(const Tensor& x, const Network& decoder) {
  if (x.rank() != decoder.output_shape().size() + 1 || x.tail_shape() != decoder.output_shape()) {
    throw ShapeError("train: data shape " + numkit::to_string(x.shape()) + " does not match decoder output " +
                     numkit::to_string(decoder.output_shape()));
  }
  if (!x.all_finite()) throw ParameterError("train: data contains non-finite values");
}

inline bool eval_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
}

constexpr std::size_t kEvalChunk = 256;

}  // namespace detail

// Mean reconstruction loss of decoder(z) against x over the whole set.
inline double full_pass_loss(const Network& decoder, const Tensor& z, const Tensor& x, LossKind loss) {
  double sum = 0.0;
  for (std::size_t begin = 0; begin < x.rows(); begin += detail::kEvalChunk) {
    const std::size_t end = std::min(x.rows(), begin + detail::kEvalChunk);
    const Tensor out = decoder.predict(z.slice_rows(begin, end));
    sum += autonet::compute_loss(loss, out, x.slice_rows(begin, end)).loss * static_cast<double>(end - begin);
  }
  return x.rows() ? sum / static_cast<double>(x.rows()) : 0.0;
}

inline Tensor encode(const Network& encoder, const Tensor& x) {
  if (x.rows() == 0) return Tensor(Shape{0, numkit::shape_size(encoder.output_shape())});
  Tensor out;
  for (std::size_t begin = 0; begin < x.rows(); begin += detail::kEvalChunk) {
    const std::size_t end = std::min(x.rows(), begin + detail::kEvalChunk);
    Tensor part = encoder.predict(x.slice_rows(begin, end));
    if (begin == 0) {
      numkit::Shape s = part.shape();
      s[0] = x.rows();
      out = Tensor(std::move(s));
    }
    std::copy(part.values().begin(), part.values().end(), out.data() + begin * out.cols());
  }
  return out;
}

struct DecoderTraining {
  LatentTable latents;
  MetricsLog log;
  optimize::Optimizer optimizer;
};

// Decoder-only training: weights and per-sample representations descend the
// same reconstruction loss. Every sample is in exactly one batch per epoch,
// so each representation gets one update per epoch.
inline DecoderTraining train_decoder(const Tensor& x, Network& decoder, const TrainConfig& cfg, numkit::Rng& rng,
                                     const EpochHook& hook = {}) {
  validate(cfg);
  detail::require_data(x, decoder);
  if (decoder.input_shape().size() != 1) throw ShapeError("train_decoder: decoder input must be a vector");
  const std::size_t n = x.rows();
  const std::size_t m = decoder.input_shape()[0];

  DecoderTraining run{latents::init_latents(n, m, rng, cfg.latent_init_scale, cfg.latent_lr, cfg.latent_momentum),
                      MetricsLog{}, optimize::Optimizer(decoder, cfg.weights)};
  run.log.record_time = cfg.record_time;
  detail::Clock clock;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(cfg.shuffle_seed, epoch, n);
    for (std::size_t begin = 0, batch = 0; begin < n; begin += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Tensor xb = x.gather_rows(rows);
      const Tensor zb = run.latents.z.gather_rows(rows);
      auto [out, cache] = decoder.forward(zb);
      const autonet::LossValue lv = autonet::compute_loss(cfg.loss, out, xb);
      detail::require_finite(lv.loss, epoch, batch);
      autonet::Gradients g = decoder.backward(cache, lv.grad);
      g.input *= latents::latent_grad_scale(cfg.latent_reduction, out);
      run.optimizer.step(decoder, g.params);
      latents::latent_step(run.latents, rows, g.input.reshaped({rows.size(), m}));
    }
    if (detail::eval_epoch(cfg, epoch)) {
      const double loss = full_pass_loss(decoder, run.latents.z, x, cfg.loss);
      detail::require_finite(loss, epoch, 0);
      run.log.add({epoch, "train", loss, std::nullopt, clock.seconds()});
      if (hook) hook(epoch, run.log);
    }
  }
  return run;
}

struct EncoderTraining {
  MetricsLog log;
  optimize::Optimizer encoder_optimizer;
  std::optional<optimize::Optimizer> decoder_optimizer;  // absent when the decoder is frozen
};

namespace detail {

// Shared loop for every regime that reconstructs through an encoder. A
// frozen decoder gets no parameter gradients; noise_sd > 0 noises the input
// and uses the noised sample as the target as well.
inline EncoderTraining train_through_encoder(const Tensor& x, Network& encoder, Network& decoder,
                                             const TrainConfig& cfg, bool denoise,
                                             const std::function<std::optional<double>()>& pcc_probe,
                                             const EpochHook& hook) {
  validate(cfg);
  require_data(x, decoder);
  if (encoder.output_shape() != decoder.input_shape()) {
    throw ShapeError("encoder output " + numkit::to_string(encoder.output_shape()) + " != decoder input " +
                     numkit::to_string(decoder.input_shape()));
  }
  if (encoder.input_shape() != decoder.output_shape()) {
    throw ShapeError("encoder input " + numkit::to_string(encoder.input_shape()) + " != decoder output " +
                     numkit::to_string(decoder.output_shape()));
  }
  const bool train_decoder = !decoder.frozen();
  EncoderTraining run{MetricsLog{}, optimize::Optimizer(encoder, cfg.weights), std::nullopt};
  if (train_decoder) run.decoder_optimizer.emplace(decoder, cfg.weights);
  run.log.record_time = cfg.record_time;
  Clock clock;
  const std::size_t n = x.rows();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(cfg.shuffle_seed, epoch, n);
    numkit::Rng noise_rng = numkit::Rng(cfg.shuffle_seed).derive(0x6e6f697365ULL).derive(epoch);
    for (std::size_t begin = 0, batch = 0; begin < n; begin += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      Tensor xb = x.gather_rows(rows);
      if (denoise) {
        for (double& v : xb.values()) {
          v += noise_rng.normal(0.0, cfg.noise_sd);
          if (cfg.clamp) v = std::clamp(v, cfg.clamp->first, cfg.clamp->second);
        }
      }
      auto [code, enc_cache] = encoder.forward(xb);
      auto [out, dec_cache] = decoder.forward(code);
      const autonet::LossValue lv = autonet::compute_loss(cfg.loss, out, xb);
      require_finite(lv.loss, epoch, batch);
      autonet::Gradients dg = decoder.backward(dec_cache, lv.grad, train_decoder);
      autonet::Gradients eg = encoder.backward(enc_cache, dg.input);
      run.encoder_optimizer.step(encoder, eg.params);
      if (train_decoder) run.decoder_optimizer->step(decoder, dg.params);
    }
    if (eval_epoch(cfg, epoch)) {
      const double loss = full_pass_loss(decoder, encode(encoder, x), x, cfg.loss);
      require_finite(loss, epoch, 0);
      run.log.add({epoch, "train", loss, pcc_probe ? pcc_probe() : std::nullopt, clock.seconds()});
      if (hook) hook(epoch, run.log);
    }
  }
  return run;
}

}  // namespace detail

// Naive autoencoder: encoder and decoder trained jointly on L(x, g(f(x))).
inline EncoderTraining train_autoencoder(const Tensor& x, Network& encoder, Network& decoder,
                                         const TrainConfig& cfg, const EpochHook& hook = {}) {
  if (decoder.frozen()) throw ContractError("train_autoencoder: decoder is frozen");
  return detail::train_through_encoder(x, encoder, decoder, cfg, false, {}, hook);
}

// Encoder against a frozen, pre-trained decoder. The logged pcc_mean is the
// agreement between encoder outputs and the decoder's own representations.
inline EncoderTraining train_encoder_on_frozen_decoder(const Tensor& x, const LatentTable& table, Network& encoder,
                                                       Network& decoder, const TrainConfig& cfg,
                                                       const EpochHook& hook = {}) {
  if (!decoder.frozen()) throw ContractError("train_encoder_on_frozen_decoder: decoder must be frozen");
  if (table.rows() != x.rows() || table.dim() != numkit::shape_size(decoder.input_shape())) {
    throw ContractError("train_encoder_on_frozen_decoder: latent table does not match the training set");
  }
  auto probe = [&]() -> std::optional<double> {
    if (x.rows() < 2) return std::nullopt;
    return analysis::representation_score(table.z, encode(encoder, x)).mean;
  };
  return detail::train_through_encoder(x, encoder, decoder, cfg, false, probe, hook);
}

// Denoising variant: the frozen decoder's manifold is the target, the encoder
// learns to project noised samples onto it. Fresh noise every epoch.
inline EncoderTraining train_denoising_encoder(const Tensor& x, Network& encoder, Network& decoder,
                                               const TrainConfig& cfg, const EpochHook& hook = {}) {
  if (!(cfg.noise_sd > 0.0)) throw ParameterError("train_denoising_encoder: noise_sd must be > 0");
  if (!decoder.frozen()) throw ContractError("train_denoising_encoder: decoder must be frozen");
  return detail::train_through_encoder(x, encoder, decoder, cfg, true, {}, hook);
}

struct EvalResult {
  double loss = 0.0;
  std::vector<double> per_sample_loss;
  Tensor representations;
  std::optional<analysis::RepresentationScore> score;  // when true representations are given
};

namespace detail {

inline void attach_score(EvalResult& r, const Tensor* z_true) {
  if (z_true) r.score = analysis::representation_score(*z_true, r.representations);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

// Decoder-only model: representations of x are found by latent inference
// against a frozen copy of the decoder.
inline EvalResult evaluate_decoder(const Network& decoder, const Tensor& x, const latents::InferenceConfig& icfg,
                                   numkit::Rng& rng, const Tensor* z_true = nullptr) {
  Network frozen = decoder;
  frozen.freeze();
  latents::InferenceResult inf = latents::infer_latents(frozen, x, icfg, rng);
  EvalResult r;
  r.per_sample_loss = std::move(inf.final_losses);
  r.loss = detail::mean_of(r.per_sample_loss);
  r.representations = std::move(inf.z);
  detail::attach_score(r, z_true);
  return r;
}

inline EvalResult evaluate_autoencoder(const Network& encoder, const Network& decoder, const Tensor& x,
                                       LossKind loss, const Tensor* z_true = nullptr) {
  EvalResult r;
  r.representations = encode(encoder, x);
  const Tensor out = x.rows() ? decoder.predict(r.representations) : Tensor(x.shape());
  r.per_sample_loss = autonet::per_sample_loss(loss, out, x);
  r.loss = detail::mean_of(r.per_sample_loss);
  detail::attach_score(r, z_true);
  return r;
}

}  // namespace encfree::trainers
