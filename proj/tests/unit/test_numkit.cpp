#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <numbers>

#include "encfree/numkit/linalg.hpp"
#include "encfree/numkit/rng.hpp"
#include "encfree/numkit/tensor.hpp"
#include "test_support.hpp"

using namespace encfree;
using namespace encfree::numkit;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Tensor, BuffersAre64ByteAligned) {
  for (std::size_t n : {1, 3, 7, 33, 1000}) {
    const Tensor a({n});
    const Tensor b = a.slice_rows(0, n);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(a.data()) % 64, 0u);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(b.data()) % 64, 0u);
  }
}

TEST(Tensor, GatherAndSliceRows) {
  const Tensor t = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::size_t> idx{2, 0};
  EXPECT_EQ(t.gather_rows(idx), Tensor::matrix({{5, 6}, {1, 2}}));
  EXPECT_EQ(t.slice_rows(1, 3), Tensor::matrix({{3, 4}, {5, 6}}));
  EXPECT_THROW(t.slice_rows(2, 4), ShapeError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  const Tensor m = sample(rng, Normal{0, 1}, {3, 3});
  EXPECT_EQ(matmul(Tensor::identity(3), m), m);
}

TEST(Matmul, OneByOne) { EXPECT_EQ(matmul(Tensor::matrix({{2}}), Tensor::matrix({{3}})), Tensor::matrix({{6}})); }

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(7);
  const Tensor a = sample(rng, Normal{0, 1}, {3, 4});
  const Tensor b = sample(rng, Normal{0, 1}, {4, 2});
  EXPECT_LT(max_abs_diff(matmul(a, b), testing_support::naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, DimensionMismatch) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST(Sample, BernoulliZeroIsAllZero) {
  Rng rng(3);
  const Tensor t = sample(rng, Bernoulli{0.0}, {17, 5});
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Sample, NormalMeanWithinCltBound) {
  Rng rng(11);
  const std::size_t n = 100000;
  const Tensor t = sample(rng, Normal{0.0, 0.2}, {n});
  double mean = 0;
  for (double v : t.values()) mean += v;
  mean /= n;
  EXPECT_LT(std::abs(mean), 4 * 0.2 / std::sqrt(double(n)));
}

TEST(Sample, GammaMeanWithinMomentBound) {
  Rng rng(12);
  const std::size_t n = 100000;
  const Tensor t = sample(rng, Gamma{2.0, 1.0}, {n});
  double mean = 0;
  for (double v : t.values()) {
    ASSERT_GT(v, 0.0);
    mean += v;
  }
  mean /= n;
  EXPECT_LT(std::abs(mean - 2.0), 4 * std::sqrt(2.0) / std::sqrt(double(n)));
}

TEST(Sample, GammaBelowOneShape) {
  Rng rng(13);
  const std::size_t n = 100000;
  const Tensor t = sample(rng, Gamma{0.5, 2.0}, {n});
  double mean = 0;
  for (double v : t.values()) mean += v;
  mean /= n;
  // mean k*theta = 1, variance k*theta^2 = 2
  EXPECT_LT(std::abs(mean - 1.0), 4 * std::sqrt(2.0) / std::sqrt(double(n)));
}

TEST(Sample, InvalidParameters) {
  Rng rng(1);
  EXPECT_THROW(sample(rng, Normal{0, -1}, {2}), ParameterError);
  EXPECT_THROW(sample(rng, Uniform{1, 0}, {2}), ParameterError);
  EXPECT_THROW(sample(rng, Gamma{0, 1}, {2}), ParameterError);
  EXPECT_THROW(sample(rng, Gamma{1, 0}, {2}), ParameterError);
  EXPECT_THROW(sample(rng, Bernoulli{1.5}, {2}), ParameterError);
}

TEST(Rng, SameSeedBitIdenticalStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(42), d(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(c.standard_normal(), d.standard_normal());
    ASSERT_EQ(c.gamma(2.0, 1.0), d.gamma(2.0, 1.0));
  }
}

TEST(Rng, DeriveIsIndependentOfParentState) {
  Rng a(5);
  Rng child1 = a.derive(3);
  a.next_u64();
  Rng child2 = a.derive(3);
  EXPECT_EQ(child1.next_u64(), child2.next_u64());
  EXPECT_NE(Rng(5).derive(3).next_u64(), Rng(5).derive(4).next_u64());
}

TEST(SymEig, DiagonalMatrix) {
  const auto e = sym_eig(Tensor::matrix({{3, 0}, {0, 1}}));
  EXPECT_DOUBLE_EQ(e.values[0], 3.0);
  EXPECT_DOUBLE_EQ(e.values[1], 1.0);
  EXPECT_DOUBLE_EQ(std::abs(e.vectors(0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(std::abs(e.vectors(1, 1)), 1.0);
}

TEST(SymEig, IdentityAllOnes) {
  const auto e = sym_eig(Tensor::identity(5));
  for (double v : e.values.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(SymEig, TwoByTwoClosedForm) {
  const auto e = sym_eig(Tensor::matrix({{2, 1}, {1, 2}}));
  EXPECT_NEAR(e.values[0], 3.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(e.vectors(0, 0)), r, 1e-14);
  EXPECT_NEAR(e.vectors(0, 0) * e.vectors(1, 0), 0.5, 1e-14);   // (1, 1) direction
  EXPECT_NEAR(e.vectors(0, 1) * e.vectors(1, 1), -0.5, 1e-14);  // (1, -1) direction
}

TEST(SymEig, RejectsAsymmetric) { EXPECT_THROW(sym_eig(Tensor::matrix({{1, 2}, {0, 1}})), ContractError); }

TEST(SymEig, ReconstructionOnRandomMatrices) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(50);
    const Tensor a = sample(rng, Normal{0, 1}, {d, d});
    const Tensor s = matmul(a, transpose(a)) + transpose(a) + a;
    const auto e = sym_eig(s);
    Tensor scaled = e.vectors;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) scaled(i, j) *= e.values[j];
    const Tensor rebuilt = matmul(scaled, transpose(e.vectors));
    ASSERT_LE((rebuilt - s).frobenius_norm(), 1e-8 * s.frobenius_norm()) << "d=" << d;
    const Tensor gram = matmul(transpose(e.vectors), e.vectors);
    ASSERT_LE((gram - Tensor::identity(d)).frobenius_norm(), 1e-10);
    for (std::size_t i = 1; i < d; ++i) ASSERT_GE(e.values[i - 1], e.values[i]);
  }
}

TEST(PrincipalAngles, EqualSubspacesZero) {
  Rng rng(2);
  const Tensor u = sample(rng, Normal{0, 1}, {6, 3});
  const Tensor angles = principal_angles(u, u);
  for (double a : angles.values()) EXPECT_NEAR(a, 0.0, 1e-12);
}

TEST(PrincipalAngles, OrthogonalAxes) {
  const Tensor e1 = Tensor::matrix({{1}, {0}, {0}});
  const Tensor e2 = Tensor::matrix({{0}, {1}, {0}});
  EXPECT_NEAR(principal_angles(e1, e2)[0], std::numbers::pi / 2, 1e-14);
}

TEST(PrincipalAngles, FortyFiveDegrees) {
  const double r = 1.0 / std::sqrt(2.0);
  const Tensor e1 = Tensor::matrix({{1}, {0}});
  const Tensor d = Tensor::matrix({{r}, {r}});
  EXPECT_NEAR(principal_angles(e1, d)[0], std::acos(r), 1e-14);
  EXPECT_NEAR(principal_angles(e1, d)[0], std::numbers::pi / 4, 1e-14);
}

TEST(PrincipalAngles, SymmetricInArguments) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.below(10);
    const std::size_t m = 1 + rng.below(n);
    const Tensor u = sample(rng, Normal{0, 1}, {n, m});
    const Tensor v = sample(rng, Normal{0, 1}, {n, m});
    const Tensor uv = principal_angles(u, v);
    const Tensor vu = principal_angles(v, u);
    ASSERT_LT(max_abs_diff(uv, vu), 1e-10);
    for (double a : uv.values()) {
      ASSERT_GE(a, 0.0);
      ASSERT_LE(a, std::numbers::pi / 2 + 1e-15);
    }
  }
}

TEST(PrincipalAngles, RankDeficientThrows) {
  const Tensor u = Tensor::matrix({{1, 2}, {1, 2}, {1, 2}});
  const Tensor v = Tensor::matrix({{1, 0}, {0, 1}, {0, 0}});
  EXPECT_THROW(principal_angles(u, v), RankError);
}
