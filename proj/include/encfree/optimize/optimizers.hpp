#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "encfree/autonet/network.hpp"
#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/tensor.hpp"

namespace encfree::optimize {

using numkit::Tensor;

enum class Rule { sgd, adam };

inline std::string to_string(Rule r) { return r == Rule::sgd ? "sgd" : "adam"; }

inline Rule parse_rule(const std::string& s) {
  if (s == "sgd") return Rule::sgd;
  if (s == "adam") return Rule::adam;
  throw ParameterError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct Hyper {
  Rule rule = Rule::adam;
  double lr = 1e-3;
  double momentum = 0.0;  // sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

inline void validate(const Hyper& h) {
  if (!(h.lr > 0.0) || !std::isfinite(h.lr)) throw ParameterError("optimizer: lr must be > 0");
  if (!(h.weight_decay >= 0.0)) throw ParameterError("optimizer: weight_decay must be >= 0");
  if (h.rule == Rule::sgd && !(h.momentum >= 0.0 && h.momentum < 1.0))
    throw ParameterError("sgd: momentum must lie in [0, 1)");
  if (h.rule == Rule::adam) {
    if (!(h.beta1 >= 0.0 && h.beta1 < 1.0) || !(h.beta2 >= 0.0 && h.beta2 < 1.0))
      throw ParameterError("adam: betas must lie in [0, 1)");
    if (!(h.eps > 0.0)) throw ParameterError("adam: eps must be > 0");
  }
}

namespace detail {
inline void require_lengths(std::size_t a, std::size_t b, std::size_t c, const char* who) {
  if (a != b || a != c) throw ShapeError(std::string(who) + ": parameter, gradient and state lengths differ");
}
}  // namespace detail

// g = grad + wd * p;  v = momentum * v + g;  p -= lr * v
inline void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                     double lr, double momentum, double weight_decay) {
  detail::require_lengths(params.size(), grads.size(), velocity.size(), "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    velocity[i] = momentum * velocity[i] + g;
    params[i] -= lr * velocity[i];
  }
}

struct AdamMoments {
  std::span<double> first;
  std::span<double> second;
};

// Bias-corrected Adam on the L2-decayed gradient; step is the 1-based
// count after this update.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments moments,
                      std::uint64_t step, const Hyper& h) {
  detail::require_lengths(params.size(), grads.size(), moments.first.size(), "adam_step");
  detail::require_lengths(params.size(), grads.size(), moments.second.size(), "adam_step");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + h.weight_decay * params[i];
    moments.first[i] = h.beta1 * moments.first[i] + (1.0 - h.beta1) * g;
    moments.second[i] = h.beta2 * moments.second[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = moments.first[i] / c1;
    const double v_hat = moments.second[i] / c2;
    params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

// Optimizer state for one parameter group (one tensor).
struct OptimState {
  Tensor first;   // sgd velocity or adam first moment
  Tensor second;  // adam second moment (empty for sgd)
  std::uint64_t step = 0;
};

// Update rule plus per-parameter state for a whole network.
class Optimizer {
 public:
  Optimizer() = default;

  Optimizer(const autonet::Network& net, Hyper hyper) : hyper_(hyper) {
    validate(hyper_);
    for (const auto& p : net.params()) {
      OptimState s;
      s.first = Tensor(p.value.shape());
      if (hyper_.rule == Rule::adam) s.second = Tensor(p.value.shape());
      states_.push_back(std::move(s));
    }
  }

  Optimizer(Hyper hyper, std::vector<OptimState> states) : hyper_(hyper), states_(std::move(states)) {
    validate(hyper_);
  }

  const Hyper& hyper() const { return hyper_; }
  const std::vector<OptimState>& states() const { return states_; }

  // Applies one update to every trainable parameter that has a gradient.
  // Weight decay applies only to parameters flagged decayable.
  void step(autonet::Network& net, const std::vector<Tensor>& grads) {
    auto& params = net.params_mut();
    if (params.size() != states_.size() || grads.size() != states_.size()) {
      throw ShapeError("optimizer: state does not match network parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.trainable || grads[i].empty()) continue;
      if (grads[i].shape() != p.value.shape() || states_[i].first.shape() != p.value.shape()) {
        throw ShapeError("optimizer: gradient shape mismatch for " + p.name);
      }
      const double wd = p.decay ? hyper_.weight_decay : 0.0;
      auto& s = states_[i];
      if (hyper_.rule == Rule::sgd) {
        sgd_step(p.value.values(), grads[i].values(), s.first.values(), hyper_.lr, hyper_.momentum, wd);
        ++s.step;
      } else {
        Hyper h = hyper_;
        h.weight_decay = wd;
        ++s.step;
        adam_step(p.value.values(), grads[i].values(), {s.first.values(), s.second.values()}, s.step, h);
      }
    }
    net.apply_masks();
  }

 private:
  Hyper hyper_;
  std::vector<OptimState> states_;
};

}  // namespace encfree::optimize
