#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/linalg.hpp"
#include "encfree/numkit/tensor.hpp"

namespace encfree::autonet {

using numkit::Shape;
using numkit::Tensor;

// Weights are stored [out, in]; y = x W^T + b.
struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  bool bias = true;
};

// Dense layer whose weight is multiplied elementwise by a fixed 0/1 mask of
// the weight's shape. Masked weights are kept at exactly zero.
struct MaskedDense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Tensor mask;  // [out, in]
  bool bias = true;
};

// Weight layout [out_channels, in_channels, k, k].
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = true;
};

// Weight layout [in_channels, out_channels, k, k]; the linear adjoint of a
// Conv2d with the same geometry and weight tensor.
struct ConvTranspose2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = true;
};

struct Relu {};
struct LeakyRelu {
  double slope = 0.01;
};
struct Sigmoid {};
struct Reshape {
  Shape target;
};

using LayerSpec = std::variant<Dense, MaskedDense, Conv2d, ConvTranspose2d, Relu, LeakyRelu, Sigmoid, Reshape>;

inline std::string kind_name(const LayerSpec& spec) {
  static constexpr const char* kNames[] = {"dense", "masked_dense", "conv2d", "conv_transpose2d",
                                           "relu", "leaky_relu", "sigmoid", "reshape"};
  return kNames[spec.index()];
}

inline std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0 || kernel == 0) throw ShapeError("conv2d: kernel and stride must be >= 1");
  if (in + 2 * pad < kernel) throw ShapeError("conv2d: kernel larger than padded input");
  return (in + 2 * pad - kernel) / stride + 1;
}

inline std::size_t conv_transpose_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                         std::size_t pad) {
  if (stride == 0 || kernel == 0) throw ShapeError("conv_transpose2d: kernel and stride must be >= 1");
  if (in == 0) throw ShapeError("conv_transpose2d: empty input");
  const std::size_t full = (in - 1) * stride + kernel;
  if (full <= 2 * pad) throw ShapeError("conv_transpose2d: output extent would be < 1");
  return full - 2 * pad;
}

namespace detail {

inline void require_shape(bool ok, const std::string& kind, const Shape& in, const std::string& expected) {
  if (!ok) throw ShapeError(kind + ": input shape " + numkit::to_string(in) + ", expected " + expected);
}

}  // namespace detail

// Per-sample output shape; throws ShapeError when the input does not fit.
inline Shape output_shape(const LayerSpec& spec, const Shape& in) {
  struct {
    const Shape& in;
    Shape operator()(const Dense& d) const {
      detail::require_shape(in.size() == 1 && in[0] == d.in_features, "dense", in,
                            "(" + std::to_string(d.in_features) + ")");
      return {d.out_features};
    }
    Shape operator()(const MaskedDense& d) const {
      detail::require_shape(in.size() == 1 && in[0] == d.in_features, "masked_dense", in,
                            "(" + std::to_string(d.in_features) + ")");
      return {d.out_features};
    }
    Shape operator()(const Conv2d& c) const {
      detail::require_shape(in.size() == 3 && in[0] == c.in_channels, "conv2d", in,
                            "(" + std::to_string(c.in_channels) + ",H,W)");
      return {c.out_channels, conv_extent(in[1], c.kernel, c.stride, c.padding),
              conv_extent(in[2], c.kernel, c.stride, c.padding)};
    }
    Shape operator()(const ConvTranspose2d& c) const {
      detail::require_shape(in.size() == 3 && in[0] == c.in_channels, "conv_transpose2d", in,
                            "(" + std::to_string(c.in_channels) + ",H,W)");
      return {c.out_channels, conv_transpose_extent(in[1], c.kernel, c.stride, c.padding),
              conv_transpose_extent(in[2], c.kernel, c.stride, c.padding)};
    }
    Shape operator()(const Relu&) const { return in; }
    Shape operator()(const LeakyRelu&) const { return in; }
    Shape operator()(const Sigmoid&) const { return in; }
    Shape operator()(const Reshape& r) const {
      detail::require_shape(numkit::shape_size(r.target) == numkit::shape_size(in), "reshape", in,
                            "size " + std::to_string(numkit::shape_size(r.target)));
      return r.target;
    }
  } visitor{in};
  return std::visit(visitor, spec);
}

struct ParamSlot {
  std::string role;  // "weight" or "bias"
  Shape shape;
  double init_bound;
};

// Parameters a layer owns, in storage order, with their init bounds
// sqrt(1 / fan_in).
inline std::vector<ParamSlot> param_slots(const LayerSpec& spec) {
  auto bound = [](std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in)); };
  std::vector<ParamSlot> slots;
  if (const auto* d = std::get_if<Dense>(&spec)) {
    slots.push_back({"weight", {d->out_features, d->in_features}, bound(d->in_features)});
    if (d->bias) slots.push_back({"bias", {d->out_features}, bound(d->in_features)});
  } else if (const auto* md = std::get_if<MaskedDense>(&spec)) {
    slots.push_back({"weight", {md->out_features, md->in_features}, bound(md->in_features)});
    if (md->bias) slots.push_back({"bias", {md->out_features}, bound(md->in_features)});
  } else if (const auto* c = std::get_if<Conv2d>(&spec)) {
    const std::size_t fan_in = c->in_channels * c->kernel * c->kernel;
    slots.push_back({"weight", {c->out_channels, c->in_channels, c->kernel, c->kernel}, bound(fan_in)});
    if (c->bias) slots.push_back({"bias", {c->out_channels}, bound(fan_in)});
  } else if (const auto* t = std::get_if<ConvTranspose2d>(&spec)) {
    const std::size_t fan_in = t->out_channels * t->kernel * t->kernel;
    slots.push_back({"weight", {t->in_channels, t->out_channels, t->kernel, t->kernel}, bound(fan_in)});
    if (t->bias) slots.push_back({"bias", {t->out_channels}, bound(fan_in)});
  }
  return slots;
}

namespace kernels {

using numkit::as_matrix;

// Lowering of a [C, H, W] image to columns [C*k*k, Ho*Wo].
inline void im2col(const double* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                   std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, double* col) {
  const std::size_t positions = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* dst = col + ((c * k + ki) * k + kj) * positions;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(h) &&
                                iw < static_cast<std::ptrdiff_t>(w);
            dst[oh * wo + ow] =
                inside ? img[(c * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into a zeroed image.
inline void col2im(const double* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                   std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, double* img) {
  const std::size_t positions = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* src = col + ((c * k + ki) * k + kj) * positions;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            img[(c * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

inline Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  const std::size_t batch = x.rows();
  const std::size_t out = weight.rows();
  Tensor y({batch, out});
  if (batch == 0) return y;
  auto ym = as_matrix(y);
  ym.noalias() = as_matrix(x.data(), batch, weight.cols()) * as_matrix(weight).transpose();
  if (bias) ym.rowwise() += as_matrix(bias->data(), 1, out).row(0);
  return y;
}

inline void dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dweight,
                           Tensor* dbias, Tensor* dx) {
  const std::size_t batch = x.rows();
  const std::size_t in = weight.cols();
  const std::size_t out = weight.rows();
  const auto xm = as_matrix(x.data(), batch, in);
  const auto dym = as_matrix(dy.data(), batch, out);
  if (dweight) as_matrix(*dweight).noalias() = dym.transpose() * xm;
  if (dbias) as_matrix(dbias->data(), 1, out) = dym.colwise().sum();
  if (dx) as_matrix(dx->data(), batch, in).noalias() = dym * as_matrix(weight);
}

struct ConvGeometry {
  std::size_t in_channels, h, w;
  std::size_t out_channels, ho, wo;
  std::size_t k, stride, pad;
};

inline Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g) {
  const std::size_t batch = x.rows();
  const std::size_t ckk = g.in_channels * g.k * g.k;
  const std::size_t pos = g.ho * g.wo;
  Tensor y({batch, g.out_channels, g.ho, g.wo});
  std::vector<double> col(ckk * pos);
  const auto wm = as_matrix(weight.data(), g.out_channels, ckk);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data() + b * g.in_channels * g.h * g.w, g.in_channels, g.h, g.w, g.k, g.stride, g.pad, g.ho, g.wo,
           col.data());
    auto yb = as_matrix(y.data() + b * g.out_channels * pos, g.out_channels, pos);
    yb.noalias() = wm * as_matrix(col.data(), ckk, pos);
    if (bias)
      for (std::size_t c = 0; c < g.out_channels; ++c) yb.row(static_cast<Eigen::Index>(c)).array() += (*bias)[c];
  }
  return y;
}

inline void conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, const ConvGeometry& g,
                            Tensor* dweight, Tensor* dbias, Tensor* dx) {
  const std::size_t batch = x.rows();
  const std::size_t ckk = g.in_channels * g.k * g.k;
  const std::size_t pos = g.ho * g.wo;
  const std::size_t in_size = g.in_channels * g.h * g.w;
  std::vector<double> col(ckk * pos);
  const auto wm = as_matrix(weight.data(), g.out_channels, ckk);
  if (dweight) dweight->fill(0.0);
  if (dbias) dbias->fill(0.0);
  if (dx) dx->fill(0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto dyb = as_matrix(dy.data() + b * g.out_channels * pos, g.out_channels, pos);
    if (dweight) {
      im2col(x.data() + b * in_size, g.in_channels, g.h, g.w, g.k, g.stride, g.pad, g.ho, g.wo, col.data());
      as_matrix(dweight->data(), g.out_channels, ckk).noalias() += dyb * as_matrix(col.data(), ckk, pos).transpose();
    }
    if (dbias)
      for (std::size_t c = 0; c < g.out_channels; ++c) (*dbias)[c] += dyb.row(static_cast<Eigen::Index>(c)).sum();
    if (dx) {
      as_matrix(col.data(), ckk, pos).noalias() = wm.transpose() * dyb;
      col2im(col.data(), g.in_channels, g.h, g.w, g.k, g.stride, g.pad, g.ho, g.wo, dx->data() + b * in_size);
    }
  }
}

// Transposed convolution: the "image" side of the lowering is the output.
inline Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias,
                                       const ConvGeometry& g) {
  const std::size_t batch = x.rows();
  const std::size_t okk = g.out_channels * g.k * g.k;
  const std::size_t pin = g.h * g.w;
  const std::size_t out_size = g.out_channels * g.ho * g.wo;
  Tensor y({batch, g.out_channels, g.ho, g.wo});
  std::vector<double> col(okk * pin);
  const auto wm = as_matrix(weight.data(), g.in_channels, okk);
  for (std::size_t b = 0; b < batch; ++b) {
    as_matrix(col.data(), okk, pin).noalias() =
        wm.transpose() * as_matrix(x.data() + b * g.in_channels * pin, g.in_channels, pin);
    double* yb = y.data() + b * out_size;
    col2im(col.data(), g.out_channels, g.ho, g.wo, g.k, g.stride, g.pad, g.h, g.w, yb);
    if (bias) {
      const std::size_t plane = g.ho * g.wo;
      for (std::size_t c = 0; c < g.out_channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) yb[c * plane + i] += (*bias)[c];
    }
  }
  return y;
}

inline void conv_transpose2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                                      const ConvGeometry& g, Tensor* dweight, Tensor* dbias, Tensor* dx) {
  const std::size_t batch = x.rows();
  const std::size_t okk = g.out_channels * g.k * g.k;
  const std::size_t pin = g.h * g.w;
  const std::size_t plane = g.ho * g.wo;
  const std::size_t out_size = g.out_channels * plane;
  std::vector<double> col(okk * pin);
  const auto wm = as_matrix(weight.data(), g.in_channels, okk);
  if (dweight) dweight->fill(0.0);
  if (dbias) dbias->fill(0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dyb = dy.data() + b * out_size;
    if (dbias)
      for (std::size_t c = 0; c < g.out_channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += dyb[c * plane + i];
        (*dbias)[c] += s;
      }
    if (!dweight && !dx) continue;
    im2col(dyb, g.out_channels, g.ho, g.wo, g.k, g.stride, g.pad, g.h, g.w, col.data());
    const auto colm = as_matrix(col.data(), okk, pin);
    if (dweight)
      as_matrix(dweight->data(), g.in_channels, okk).noalias() +=
          as_matrix(x.data() + b * g.in_channels * pin, g.in_channels, pin) * colm.transpose();
    if (dx) as_matrix(dx->data() + b * g.in_channels * pin, g.in_channels, pin).noalias() = wm * colm;
  }
}

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace kernels
}  // namespace encfree::autonet
