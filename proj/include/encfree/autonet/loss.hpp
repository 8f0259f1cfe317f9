#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "encfree/autonet/layers.hpp"
#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/tensor.hpp"

namespace encfree::autonet {

enum class LossKind { mse, bce };

inline std::string to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "bce"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "bce") return LossKind::bce;
  throw ParameterError("unknown loss kind '" + s + "' (expected mse or bce)");
}

struct LossValue {
  double loss = 0.0;
  Tensor grad;  // d loss / d prediction
};

namespace detail {

inline void require_same(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(who) + ": prediction " + numkit::to_string(a.shape()) + " vs target " +
                     numkit::to_string(b.shape()));
  }
}

inline void require_unit_targets(const Tensor& t) {
  for (double v : t.values())
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("bce_loss: target outside [0, 1]");
}

inline double bce_term(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace detail

// Mean over all elements of (pred - target)^2.
inline LossValue mse_loss(const Tensor& pred, const Tensor& target) {
  detail::require_same(pred, target, "mse_loss");
  LossValue out{0.0, Tensor(pred.shape())};
  const std::size_t n = pred.size();
  if (n == 0) return out;
  const double scale = 2.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = pred[i] - target[i];
    sum += r * r;
    out.grad[i] = scale * r;
  }
  out.loss = sum / static_cast<double>(n);
  return out;
}

// Sigmoid + binary cross entropy fused on logits, mean over elements:
// max(l, 0) - l t + log(1 + exp(-|l|)).
inline LossValue bce_loss(const Tensor& logits, const Tensor& targets) {
  detail::require_same(logits, targets, "bce_loss");
  detail::require_unit_targets(targets);
  LossValue out{0.0, Tensor(logits.shape())};
  const std::size_t n = logits.size();
  if (n == 0) return out;
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += detail::bce_term(logits[i], targets[i]);
    out.grad[i] = (kernels::sigmoid(logits[i]) - targets[i]) * inv;
  }
  out.loss = sum * inv;
  return out;
}

inline LossValue compute_loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  return kind == LossKind::mse ? mse_loss(pred, target) : bce_loss(pred, target);
}

// Gradient of the elementwise loss summed (not averaged) over all entries:
// 2 (pred - target) for mse, sigmoid(logit) - target for bce. Each entry
// depends only on its own element, so it is independent of batch size.
inline Tensor sum_loss_grad(LossKind kind, const Tensor& pred, const Tensor& target) {
  detail::require_same(pred, target, "sum_loss_grad");
  if (kind == LossKind::bce) detail::require_unit_targets(target);
  Tensor g(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i)
    g[i] = kind == LossKind::mse ? 2.0 * (pred[i] - target[i]) : kernels::sigmoid(pred[i]) - target[i];
  return g;
}

// Loss of each sample (row), averaged over that sample's elements.
inline std::vector<double> per_sample_loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  detail::require_same(pred, target, "per_sample_loss");
  if (kind == LossKind::bce) detail::require_unit_targets(target);
  const std::size_t rows = pred.rows();
  const std::size_t cols = pred.cols();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t k = r * cols + c;
      if (kind == LossKind::mse) {
        const double d = pred[k] - target[k];
        sum += d * d;
      } else {
        sum += detail::bce_term(pred[k], target[k]);
      }
    }
    out[r] = cols ? sum / static_cast<double>(cols) : 0.0;
  }
  return out;
}

// Maps network output to reconstruction space (BCE heads emit logits).
inline Tensor reconstruction(LossKind kind, Tensor output) {
  if (kind == LossKind::bce)
    for (double& v : output.values()) v = kernels::sigmoid(v);
  return output;
}

}  // namespace encfree::autonet
