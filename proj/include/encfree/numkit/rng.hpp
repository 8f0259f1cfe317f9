#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/tensor.hpp"

namespace encfree::numkit {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded generator. The engine is std::mt19937_64, whose output stream is
// fixed by the standard; every transform to a distribution is done here
// rather than through <random> distributions, which are implementation
// defined. Same seed + same call sequence gives a bit-identical stream on
// any conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Independent child stream keyed by (seed, stream); does not advance this.
  Rng derive(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw ParameterError("rng: below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  // Box-Muller; the second variate of each pair is cached.
  double standard_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * standard_normal(); }

  // Marsaglia-Tsang squeeze method; shapes below 1 use the
  // Gamma(k) = Gamma(k + 1) * U^(1/k) boost.
  double gamma(double shape_k, double scale) {
    if (shape_k < 1.0) {
      const double g = gamma(shape_k + 1.0, 1.0);
      double u;
      do {
        u = uniform01();
      } while (u <= 0.0);
      return scale * g * std::pow(u, 1.0 / shape_k);
    }
    const double d = shape_k - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = standard_normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return scale * d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct Normal {
  double mean = 0.0;
  double sd = 1.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};
struct Gamma {
  double shape_k = 1.0;
  double scale = 1.0;
};
struct Bernoulli {
  double p = 0.5;
};

using Distribution = std::variant<Normal, Uniform, Gamma, Bernoulli>;

inline void validate(const Distribution& dist) {
  struct {
    void operator()(const Normal& d) const {
      if (!(d.sd >= 0.0) || !std::isfinite(d.mean) || !std::isfinite(d.sd))
        throw ParameterError("normal: sd must be >= 0 and finite");
    }
    void operator()(const Uniform& d) const {
      if (!(d.lo <= d.hi) || !std::isfinite(d.lo) || !std::isfinite(d.hi))
        throw ParameterError("uniform: need finite lo <= hi");
    }
    void operator()(const Gamma& d) const {
      if (!(d.shape_k > 0.0) || !(d.scale > 0.0) || !std::isfinite(d.shape_k) || !std::isfinite(d.scale))
        throw ParameterError("gamma: shape and scale must be > 0");
    }
    void operator()(const Bernoulli& d) const {
      if (!(d.p >= 0.0 && d.p <= 1.0)) throw ParameterError("bernoulli: p must lie in [0, 1]");
    }
  } check;
  std::visit(check, dist);
}

inline double draw(Rng& rng, const Distribution& dist) {
  struct {
    Rng& rng;
    double operator()(const Normal& d) const { return rng.normal(d.mean, d.sd); }
    double operator()(const Uniform& d) const { return rng.uniform(d.lo, d.hi); }
    double operator()(const Gamma& d) const { return rng.gamma(d.shape_k, d.scale); }
    double operator()(const Bernoulli& d) const { return rng.bernoulli(d.p) ? 1.0 : 0.0; }
  } visitor{rng};
  return std::visit(visitor, dist);
}

// i.i.d. samples in row-major order.
inline Tensor sample(Rng& rng, const Distribution& dist, Shape shape) {
  validate(dist);
  Tensor out(std::move(shape));
  for (double& v : out.values()) v = draw(rng, dist);
  return out;
}

}  // namespace encfree::numkit
