#pragma once

#include <cstddef>
#include <string>

#include "encfree/autonet/network.hpp"
#include "encfree/numkit/errors.hpp"

namespace encfree::analysis {

// Constraints per parameter for a decoder trained jointly with its N
// representations: N n / (C_d + N m).
inline double decoder_load(std::size_t n, std::size_t m, std::size_t c_d, std::size_t samples) {
  if (n == 0 || m == 0 || samples == 0) throw ParameterError("decoder_load: n, m and N must be >= 1");
  const double nn = static_cast<double>(samples);
  return nn * static_cast<double>(n) / (static_cast<double>(c_d) + nn * static_cast<double>(m));
}

// Encoder fitted to fixed representations: m N / C_e.
inline double encoder_load(std::size_t m, std::size_t samples, std::size_t c_e) {
  if (m == 0 || samples == 0 || c_e == 0) throw ParameterError("encoder_load: m, N and C_e must be >= 1");
  return static_cast<double>(m) * static_cast<double>(samples) / static_cast<double>(c_e);
}

// Decoder load implied by an encoder load when both networks have the same
// parameter count: (n/m) a_e / (1 + a_e).
inline double load_relation(std::size_t n, std::size_t m, double alpha_e) {
  if (n == 0 || m == 0) throw ParameterError("load_relation: n and m must be >= 1");
  if (!(alpha_e > 0.0)) throw ParameterError("load_relation: alpha_e must be > 0");
  return static_cast<double>(n) / static_cast<double>(m) * (alpha_e / (1.0 + alpha_e));
}

struct LoadReport {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t c_d = 0;
  std::size_t c_e = 0;  // 0 when there is no encoder
  std::size_t samples = 0;
  double alpha_d = 0.0;
  double alpha_e = 0.0;  // 0 when there is no encoder
};

inline LoadReport make_load_report(std::size_t n, std::size_t m, std::size_t c_d, std::size_t c_e,
                                   std::size_t samples) {
  LoadReport r{n, m, c_d, c_e, samples, decoder_load(n, m, c_d, samples), 0.0};
  if (c_e > 0) r.alpha_e = encoder_load(m, samples, c_e);
  return r;
}

// Parameter counts always come from the networks themselves.
inline LoadReport load_report(const autonet::Network& decoder, const autonet::Network* encoder,
                              std::size_t samples) {
  if (decoder.input_shape().size() != 1) throw ShapeError("load_report: decoder input must be a vector");
  const std::size_t m = decoder.input_shape()[0];
  const std::size_t n = numkit::shape_size(decoder.output_shape());
  return make_load_report(n, m, decoder.total_param_count(), encoder ? encoder->total_param_count() : 0, samples);
}

}  // namespace encfree::analysis
