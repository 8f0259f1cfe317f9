#pragma once

#include <algorithm>
#include <cstddef>

#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/linalg.hpp"
#include "encfree/numkit/tensor.hpp"

namespace encfree::analysis {

using numkit::Tensor;

struct PcaResult {
  Tensor components;   // [n, m], orthonormal columns
  Tensor mean;         // [n]
  Tensor eigenvalues;  // [m], descending
  bool rank_deficient = false;  // fewer than m directions carry variance
};

inline Tensor column_mean(const Tensor& x) {
  numkit::require_matrix(x, "column_mean");
  Tensor mean({x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(r, c);
  if (x.rows() > 0) mean *= 1.0 / static_cast<double>(x.rows());
  return mean;
}

// Sample covariance with divisor N - 1.
inline Tensor covariance(const Tensor& x, const Tensor& mean) {
  Tensor centered = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) centered(r, c) -= mean[c];
  const auto cm = numkit::as_matrix(centered);
  numkit::RowMatrix cov = cm.transpose() * cm / static_cast<double>(x.rows() - 1);
  return numkit::from_matrix(cov);
}

// Principal subspace from the exact covariance eigendecomposition.
inline PcaResult pca(const Tensor& x, std::size_t m) {
  numkit::require_matrix(x, "pca");
  const std::size_t samples = x.rows();
  const std::size_t n = x.cols();
  if (samples < 2) throw SizeError("pca: need at least 2 samples");
  if (m == 0 || m > std::min(samples, n)) throw ParameterError("pca: m must lie in [1, min(N, n)]");

  PcaResult out;
  out.mean = column_mean(x);
  const auto eig = numkit::sym_eig(covariance(x, out.mean));
  out.components = Tensor({n, m});
  out.eigenvalues = Tensor({m});
  const double top = std::max(eig.values[0], 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    out.eigenvalues[j] = eig.values[j];
    if (!(eig.values[j] > 1e-12 * top) || top == 0.0) out.rank_deficient = true;
    for (std::size_t i = 0; i < n; ++i) out.components(i, j) = eig.vectors(i, j);
  }
  return out;
}

}  // namespace encfree::analysis
