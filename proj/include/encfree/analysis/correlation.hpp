#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/tensor.hpp"

namespace encfree::analysis {

using numkit::Tensor;

// Pearson correlation; two-pass for accuracy.
inline double pcc(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("pcc: length mismatch");
  const std::size_t n = u.size();
  if (n < 2) throw SizeError("pcc: need at least 2 samples");
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= static_cast<double>(n);
  mv /= static_cast<double>(n);
  double suv = 0.0, suu = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double du = u[i] - mu;
    const double dv = v[i] - mv;
    suv += du * dv;
    suu += du * du;
    svv += dv * dv;
  }
  if (suu == 0.0 || svv == 0.0) throw UndefinedCorrelationError("pcc: constant input");
  const double r = suv / std::sqrt(suu * svv);
  return std::clamp(r, -1.0, 1.0);
}

inline double pcc(const Tensor& u, const Tensor& v) { return pcc(u.values(), v.values()); }

struct RepresentationScore {
  Tensor per_dim;               // [m]; 0 where undefined
  std::vector<bool> undefined;  // constant column in either matrix
  double mean = 0.0;            // over defined dimensions
  // Mean of |PCC|. A masked decoder pins each unit to one factor, but
  // (z_j, W[:, j]) -> (-z_j, -W[:, j]) leaves its output unchanged, so only
  // the magnitude is identifiable when comparing against ground truth.
  double mean_abs = 0.0;
};

// Column-wise PCC between aligned [N, m] matrices; no permutation matching.
inline RepresentationScore representation_score(const Tensor& z_true, const Tensor& z_learned) {
  if (z_true.rank() != 2 || z_true.shape() != z_learned.shape()) {
    throw ShapeError("representation_score: shapes " + numkit::to_string(z_true.shape()) + " and " +
                     numkit::to_string(z_learned.shape()) + " must be equal matrices");
  }
  const std::size_t m = z_true.cols();
  RepresentationScore s{Tensor({m}), std::vector<bool>(m, false), 0.0};
  std::size_t defined = 0;
  double sum = 0.0, sum_abs = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    try {
      s.per_dim[j] = pcc(z_true.column(j), z_learned.column(j));
      sum += s.per_dim[j];
      sum_abs += std::abs(s.per_dim[j]);
      ++defined;
    } catch (const UndefinedCorrelationError&) {
      s.undefined[j] = true;
    }
  }
  s.mean = defined ? sum / static_cast<double>(defined) : 0.0;
  s.mean_abs = defined ? sum_abs / static_cast<double>(defined) : 0.0;
  return s;
}

}  // namespace encfree::analysis
