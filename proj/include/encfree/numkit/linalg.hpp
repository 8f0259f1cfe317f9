#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/tensor.hpp"

namespace encfree::numkit {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap as_matrix(double* data, std::size_t rows, std::size_t cols) {
  return MatrixMap(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatrixMap as_matrix(const double* data, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatrixMap as_matrix(Tensor& t) { return as_matrix(t.data(), t.rows(), t.cols()); }
inline ConstMatrixMap as_matrix(const Tensor& t) { return as_matrix(t.data(), t.rows(), t.cols()); }

inline Tensor from_matrix(const RowMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  as_matrix(t) = m;
  return t;
}

inline void require_matrix(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected a matrix, got shape " + to_string(t.shape()));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  if (a.cols() == 0) return c;
  as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
  return c;
}

inline Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor t({a.cols(), a.rows()});
  as_matrix(t) = as_matrix(a).transpose();
  return t;
}

struct EigenDecomposition {
  Tensor values;   // [d], descending
  Tensor vectors;  // [d x d], column i pairs with values[i]
};

// Cyclic Jacobi eigensolver for real symmetric matrices. Iterates sweeps
// until the off-diagonal Frobenius norm drops below 1e-12 * ||S||_F.
inline EigenDecomposition sym_eig(const Tensor& s, double symmetry_tol = 1e-10) {
  require_matrix(s, "sym_eig");
  const std::size_t d = s.rows();
  if (s.cols() != d) throw ShapeError("sym_eig: matrix is not square");

  std::vector<double> a(s.storage().begin(), s.storage().end());
  double max_abs = 0.0;
  for (double v : a) max_abs = std::max(max_abs, std::abs(v));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (std::abs(a[i * d + j] - a[j * d + i]) > symmetry_tol * std::max(1.0, max_abs)) {
        throw ContractError("sym_eig: input is not symmetric");
      }
    }
  }
  // Work on the exactly symmetrized copy.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const double m = 0.5 * (a[i * d + j] + a[j * d + i]);
      a[i * d + j] = a[j * d + i] = m;
    }
  }

  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  const double norm = s.frobenius_norm();
  const double threshold = 1e-12 * norm;
  constexpr int kMaxSweeps = 100;

  auto off_norm = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (i != j) sum += a[i * d + j] * a[i * d + j];
    return std::sqrt(sum);
  };

  for (int sweep = 0; sweep < kMaxSweeps && norm > 0.0; ++sweep) {
    if (off_norm() <= threshold) break;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p];
          const double akq = a[k * d + q];
          a[k * d + p] = c * akp - sn * akq;
          a[k * d + q] = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k];
          const double aqk = a[q * d + k];
          a[p * d + k] = c * apk - sn * aqk;
          a[q * d + k] = sn * apk + c * aqk;
        }
        a[p * d + q] = a[q * d + p] = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p];
          const double vkq = v[k * d + q];
          v[k * d + p] = c * vkp - sn * vkq;
          v[k * d + q] = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * d + i] > a[j * d + j]; });

  EigenDecomposition out{Tensor({d}), Tensor({d, d})};
  for (std::size_t col = 0; col < d; ++col) {
    const std::size_t src = order[col];
    out.values[col] = a[src * d + src];
    // Sign convention: largest-magnitude component positive.
    std::size_t arg = 0;
    for (std::size_t k = 1; k < d; ++k)
      if (std::abs(v[k * d + src]) > std::abs(v[arg * d + src])) arg = k;
    const double sign = v[arg * d + src] < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < d; ++k) out.vectors(k, col) = sign * v[k * d + src];
  }
  return out;
}

// Orthonormal basis of the column space via column-pivoted Householder QR.
// Throws RankError if the columns are numerically dependent.
inline RowMatrix orthonormal_basis(const Tensor& u, double rank_tol = 1e-10) {
  require_matrix(u, "orthonormal_basis");
  const auto n = static_cast<Eigen::Index>(u.rows());
  const auto m = static_cast<Eigen::Index>(u.cols());
  if (m > n) throw RankError("orthonormal_basis: more columns than rows");
  Eigen::ColPivHouseholderQR<RowMatrix> qr(as_matrix(u));
  qr.setThreshold(rank_tol);
  if (qr.rank() < m) throw RankError("orthonormal_basis: input is rank deficient");
  RowMatrix q = qr.householderQ() * RowMatrix::Identity(n, m);
  return q;
}

// Canonical angles between span(U) and span(V), ascending, in [0, pi/2].
// Large angles come from the cosines (singular values of Qu^T Qv), small
// ones from the sines (singular values of Qv - Qu Qu^T Qv), which keeps
// precision near zero.
inline Tensor principal_angles(const Tensor& u, const Tensor& v) {
  require_matrix(u, "principal_angles");
  require_matrix(v, "principal_angles");
  if (u.shape() != v.shape()) throw ShapeError("principal_angles: U and V must have equal shapes");
  const RowMatrix qu = orthonormal_basis(u);
  const RowMatrix qv = orthonormal_basis(v);
  const RowMatrix cross = qu.transpose() * qv;
  const RowMatrix residual = qv - qu * cross;

  Eigen::JacobiSVD<RowMatrix> svd_cos(cross);
  Eigen::JacobiSVD<RowMatrix> svd_sin(residual);
  Eigen::VectorXd cosines = svd_cos.singularValues();  // descending
  Eigen::VectorXd sines = svd_sin.singularValues();    // descending
  const std::size_t m = u.cols();
  Tensor angles({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double c = std::min(1.0, cosines(static_cast<Eigen::Index>(i)));
    const double s = std::min(1.0, sines(static_cast<Eigen::Index>(m - 1 - i)));
    angles[i] = (c * c >= 0.5) ? std::asin(s) : std::acos(c);
  }
  std::sort(angles.values().begin(), angles.values().end());
  return angles;
}

}  // namespace encfree::numkit
