#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "encfree/autonet/layers.hpp"
#include "encfree/numkit/rng.hpp"

namespace encfree::autonet {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
  bool decay = true;  // receives weight decay from the optimizer
};

struct ForwardCache {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::vector<Tensor> inputs;  // inputs[i] is what layer i consumed
  Tensor output;
};

struct Gradients {
  std::vector<Tensor> params;  // aligned with Network::params(); empty tensor when not computed
  Tensor input;
};

namespace detail {

inline std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

// Copies of a network get a fresh identity so caches cannot cross over.
struct Identity {
  std::uint64_t id = next_network_id();
  Identity() = default;
  Identity(const Identity&) : id(next_network_id()) {}
  Identity& operator=(const Identity&) {
    id = next_network_id();
    return *this;
  }
  Identity(Identity&&) noexcept = default;
  Identity& operator=(Identity&&) noexcept = default;
};

}  // namespace detail

// An ordered stack of layers over a per-sample input shape, with a flat
// parameter store. Layer i owns params()[offset(i) .. offset(i)+count(i)).
class Network {
 public:
  Network() = default;

  Network(Shape input_shape, std::vector<LayerSpec> layers, numkit::Rng& init_rng)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    build_shapes();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (const auto& slot : param_slots(layers_[i])) {
        Parameter p{"layer" + std::to_string(i) + "." + slot.role,
                    numkit::sample(init_rng, numkit::Uniform{-slot.init_bound, slot.init_bound}, slot.shape)};
        params_.push_back(std::move(p));
      }
    }
    index_params();
    apply_masks();
  }

  // Rebuilds a network from stored parameters (checkpoint loading).
  Network(Shape input_shape, std::vector<LayerSpec> layers, std::vector<Parameter> params)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)), params_(std::move(params)) {
    build_shapes();
    std::size_t expected = 0;
    for (const auto& layer : layers_) expected += param_slots(layer).size();
    if (expected != params_.size()) throw ShapeError("network: parameter count does not match layer list");
    index_params();
    std::size_t k = 0;
    for (const auto& layer : layers_) {
      for (const auto& slot : param_slots(layer)) {
        if (params_[k].value.shape() != slot.shape) {
          throw ShapeError("network: parameter " + params_[k].name + " has shape " +
                           numkit::to_string(params_[k].value.shape()) + ", expected " +
                           numkit::to_string(slot.shape));
        }
        ++k;
      }
    }
    apply_masks();
  }

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  // shapes()[i] is the per-sample input of layer i; the last entry is the output.
  const std::vector<Shape>& shapes() const { return shapes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }

  const std::vector<Parameter>& params() const { return params_; }
  // Mutable access invalidates outstanding forward caches.
  std::vector<Parameter>& params_mut() {
    ++version_;
    return params_;
  }

  std::uint64_t id() const { return identity_.id; }
  std::uint64_t version() const { return version_; }

  void set_trainable(bool trainable) {
    for (auto& p : params_) p.trainable = trainable;
  }
  void freeze() { set_trainable(false); }
  bool frozen() const {
    for (const auto& p : params_)
      if (p.trainable) return false;
    return true;
  }

  // Trainable scalar count; masked weights count only their unmasked entries.
  std::size_t param_count() const {
    std::size_t total = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto* masked = std::get_if<MaskedDense>(&layers_[i]);
      for (std::size_t j = 0; j < param_counts_[i]; ++j) {
        const Parameter& p = params_[param_offsets_[i] + j];
        if (!p.trainable) continue;
        if (masked && j == 0) {
          for (double m : masked->mask.values()) total += (m != 0.0) ? 1 : 0;
        } else {
          total += p.value.size();
        }
      }
    }
    return total;
  }

  // Counts every parameter regardless of the trainable flag.
  std::size_t total_param_count() const {
    std::size_t total = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto* masked = std::get_if<MaskedDense>(&layers_[i]);
      for (std::size_t j = 0; j < param_counts_[i]; ++j) {
        if (masked && j == 0) {
          for (double m : masked->mask.values()) total += (m != 0.0) ? 1 : 0;
        } else {
          total += params_[param_offsets_[i] + j].value.size();
        }
      }
    }
    return total;
  }

  // FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
      for (double v : p.value.values()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
          h ^= b;
          h *= 0x100000001b3ULL;
        }
      }
    }
    return h;
  }

  void apply_masks() {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (const auto* masked = std::get_if<MaskedDense>(&layers_[i])) {
        Tensor& w = params_[param_offsets_[i]].value;
        for (std::size_t k = 0; k < w.size(); ++k)
          if (masked->mask[k] == 0.0) w[k] = 0.0;
      }
    }
  }

  std::pair<Tensor, ForwardCache> forward(const Tensor& input) const {
    check_input(input);
    ForwardCache cache;
    cache.network_id = id();
    cache.version = version_;
    cache.inputs.reserve(layers_.size());
    Tensor current = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Tensor next = forward_layer(i, current);
      cache.inputs.push_back(std::move(current));
      current = std::move(next);
    }
    cache.output = current;
    return {std::move(current), std::move(cache)};
  }

  // Output only, no cache.
  Tensor predict(const Tensor& input) const {
    check_input(input);
    Tensor current = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) current = forward_layer(i, current);
    return current;
  }

  // Reverse-mode pass. Parameter gradients are produced only for trainable
  // parameters and only when want_param_grads is set.
  Gradients backward(const ForwardCache& cache, const Tensor& output_grad, bool want_param_grads = true) const {
    if (cache.network_id != id() || cache.version != version_ || cache.inputs.size() != layers_.size()) {
      throw ContractError("network backward: cache is stale or from another network");
    }
    if (output_grad.shape() != cache.output.shape()) {
      throw ShapeError("network backward: output_grad shape " + numkit::to_string(output_grad.shape()) +
                       " differs from output " + numkit::to_string(cache.output.shape()));
    }
    Gradients grads;
    grads.params.resize(params_.size());
    Tensor upstream = output_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Tensor& layer_out = (i + 1 < layers_.size()) ? cache.inputs[i + 1] : cache.output;
      upstream = backward_layer(i, cache.inputs[i], layer_out, upstream, grads, want_param_grads);
    }
    grads.input = std::move(upstream);
    return grads;
  }

 private:
  void build_shapes() {
    shapes_.clear();
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (const auto* masked = std::get_if<MaskedDense>(&layers_[i])) {
        if (masked->mask.shape() != Shape{masked->out_features, masked->in_features}) {
          throw ShapeError("layer " + std::to_string(i) + " (masked_dense): mask shape " +
                           numkit::to_string(masked->mask.shape()) + " differs from weight shape");
        }
      }
      if (const auto* leaky = std::get_if<LeakyRelu>(&layers_[i])) {
        if (!std::isfinite(leaky->slope)) throw ParameterError("layer " + std::to_string(i) + ": bad slope");
      }
      try {
        shapes_.push_back(autonet::output_shape(layers_[i], shapes_.back()));
      } catch (const ShapeError& e) {
        throw ShapeError("layer " + std::to_string(i) + " (" + kind_name(layers_[i]) + "): " + e.what());
      }
    }
  }

  void index_params() {
    param_offsets_.clear();
    param_counts_.clear();
    std::size_t offset = 0;
    for (const auto& layer : layers_) {
      const std::size_t n = param_slots(layer).size();
      param_offsets_.push_back(offset);
      param_counts_.push_back(n);
      offset += n;
    }
  }

  void check_input(const Tensor& input) const {
    if (input.rank() != input_shape_.size() + 1 || input.tail_shape() != input_shape_) {
      throw ShapeError("layer 0 (" + (layers_.empty() ? std::string("input") : kind_name(layers_[0])) +
                       "): input shape " + numkit::to_string(input.shape()) + " does not match (batch," +
                       numkit::to_string(input_shape_).substr(1));
    }
  }

  const Tensor* bias_of(std::size_t layer) const {
    return param_counts_[layer] > 1 ? &params_[param_offsets_[layer] + 1].value : nullptr;
  }
  const Tensor& weight_of(std::size_t layer) const { return params_[param_offsets_[layer]].value; }

  kernels::ConvGeometry geometry(std::size_t layer, std::size_t in_ch, std::size_t out_ch, std::size_t k,
                                 std::size_t stride, std::size_t pad) const {
    const Shape& in = shapes_[layer];
    const Shape& out = shapes_[layer + 1];
    return {in_ch, in[1], in[2], out_ch, out[1], out[2], k, stride, pad};
  }

  Shape batched(std::size_t batch, const Shape& per_sample) const {
    Shape s{batch};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
  }

  Tensor forward_layer(std::size_t i, const Tensor& x) const {
    const LayerSpec& spec = layers_[i];
    const std::size_t batch = x.rows();
    switch (spec.index()) {
      case 0:
      case 1:
        return kernels::dense_forward(x, weight_of(i), bias_of(i));
      case 2: {
        const auto& c = std::get<Conv2d>(spec);
        return kernels::conv2d_forward(x, weight_of(i), bias_of(i),
                                       geometry(i, c.in_channels, c.out_channels, c.kernel, c.stride, c.padding));
      }
      case 3: {
        const auto& c = std::get<ConvTranspose2d>(spec);
        return kernels::conv_transpose2d_forward(
            x, weight_of(i), bias_of(i), geometry(i, c.in_channels, c.out_channels, c.kernel, c.stride, c.padding));
      }
      case 4: {
        Tensor y = x;
        for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
        return y;
      }
      case 5: {
        const double slope = std::get<LeakyRelu>(spec).slope;
        Tensor y = x;
        for (double& v : y.values()) v = v > 0.0 ? v : slope * v;
        return y;
      }
      case 6: {
        Tensor y = x;
        for (double& v : y.values()) v = kernels::sigmoid(v);
        return y;
      }
      default:
        return x.reshaped(batched(batch, shapes_[i + 1]));
    }
  }

  Tensor backward_layer(std::size_t i, const Tensor& x, const Tensor& y, const Tensor& dy, Gradients& grads,
                        bool want_param_grads) const {
    const LayerSpec& spec = layers_[i];
    const std::size_t first = param_offsets_[i];
    const bool has_params = param_counts_[i] > 0;
    const bool w_grad = want_param_grads && has_params && params_[first].trainable;
    const bool b_grad = want_param_grads && param_counts_[i] > 1 && params_[first + 1].trainable;
    Tensor* dweight = nullptr;
    Tensor* dbias = nullptr;
    if (w_grad) {
      grads.params[first] = Tensor(params_[first].value.shape());
      dweight = &grads.params[first];
    }
    if (b_grad) {
      grads.params[first + 1] = Tensor(params_[first + 1].value.shape());
      dbias = &grads.params[first + 1];
    }
    // The first layer's input gradient is the latent gradient, always needed.
    Tensor dx(x.shape());

    switch (spec.index()) {
      case 0:
        kernels::dense_backward(x, weight_of(i), dy, dweight, dbias, &dx);
        break;
      case 1: {
        kernels::dense_backward(x, weight_of(i), dy, dweight, dbias, &dx);
        if (dweight) {
          const Tensor& mask = std::get<MaskedDense>(spec).mask;
          for (std::size_t k = 0; k < dweight->size(); ++k)
            if (mask[k] == 0.0) (*dweight)[k] = 0.0;
        }
        break;
      }
      case 2: {
        const auto& c = std::get<Conv2d>(spec);
        kernels::conv2d_backward(x, weight_of(i), dy,
                                 geometry(i, c.in_channels, c.out_channels, c.kernel, c.stride, c.padding), dweight,
                                 dbias, &dx);
        break;
      }
      case 3: {
        const auto& c = std::get<ConvTranspose2d>(spec);
        kernels::conv_transpose2d_backward(
            x, weight_of(i), dy, geometry(i, c.in_channels, c.out_channels, c.kernel, c.stride, c.padding), dweight,
            dbias, &dx);
        break;
      }
      case 4:
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = x[k] > 0.0 ? dy[k] : 0.0;
        break;
      case 5: {
        const double slope = std::get<LeakyRelu>(spec).slope;
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = x[k] > 0.0 ? dy[k] : slope * dy[k];
        break;
      }
      case 6:
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = dy[k] * y[k] * (1.0 - y[k]);
        break;
      default:
        dx = dy.reshaped(x.shape());
        break;
    }
    return dx;
  }

  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<Parameter> params_;
  std::vector<std::size_t> param_offsets_;
  std::vector<std::size_t> param_counts_;
  std::uint64_t version_ = 0;
  detail::Identity identity_;
};

}  // namespace encfree::autonet
