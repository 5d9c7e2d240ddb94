// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "kstruct/errors.hpp"
#include "kstruct/sblock.hpp"
#include "oracles.hpp"

using namespace kstruct;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd random_vector(std::mt19937_64& rng, Index p) {
  std::normal_distribution<double> z;
  VectorXd v(p);
  for (Index k = 0; k < p; ++k) v(k) = z(rng);
  return v;
}

// Positive definite for every d >= 4.
SBlock random_pd(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double s0 = u(rng);
  double s1 = s0 + u(rng);
  double s2 = 2 * s1 - s0 + 0.1 + u(rng);
  return SBlock{s0, s1, s2, d};
}

SBlock random_any(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return SBlock{u(rng), u(rng), u(rng), d};
}

}  // namespace

TEST(SBlockMaterialize, IdentityOnesAndOverlapRule) {
  EXPECT_TRUE(materialize(SBlock{0, 0, 1, 6}).isIdentity());
  EXPECT_TRUE((materialize(SBlock{1, 1, 1, 6}).array() == 1.0).all());
  MatrixXd M = materialize(SBlock{0.1, 0.2, 0.3, 7});
  EXPECT_EQ(M, oracle::overlap_matrix(7, 0.1, 0.2, 0.3));
  EXPECT_THROW(materialize(SBlock{0, 0, 1, 61}), InvalidArgument);
  EXPECT_NO_THROW(materialize(SBlock{0, 0, 1, 61}, 61));
}

TEST(SBlockMaterialize, FourVariableProjectorCoefficients) {
  SBlock g = gamma_star_coefficients(4);
  EXPECT_NEAR(g.s0, -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.s1, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(g.s2, 2.0 / 3.0, 1e-15);
  // Dense oracle: orthogonal projector onto vectors of the form a_i + a_j.
  EXPECT_LE((materialize(g) - oracle::dense_column_projector(4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SBlockEigen, SimpleCases) {
  auto e = eigenvalues(SBlock{1, 1, 1, 6});
  EXPECT_NEAR(e.delta1, 15, 1e-12);
  EXPECT_NEAR(e.delta2, 0, 1e-12);
  EXPECT_NEAR(e.delta3, 0, 1e-12);
  EXPECT_EQ(e.mult1, 1);
  EXPECT_EQ(e.mult2, 5);
  EXPECT_EQ(e.mult3, 9);
  auto id = eigenvalues(SBlock{0, 0, 1, 9});
  EXPECT_DOUBLE_EQ(id.delta1, 1);
  EXPECT_DOUBLE_EQ(id.delta2, 1);
  EXPECT_DOUBLE_EQ(id.delta3, 1);
}

TEST(SBlockEigen, SmallDimensions) {
  auto e3 = eigenvalues(SBlock{0.7, 0.2, 1.0, 3});
  EXPECT_DOUBLE_EQ(e3.delta1, 1.4);
  EXPECT_DOUBLE_EQ(e3.delta2, 0.8);
  EXPECT_EQ(e3.mult1, 1);
  EXPECT_EQ(e3.mult2, 2);
  EXPECT_EQ(e3.mult3, 0);
  auto e2 = eigenvalues(SBlock{0.7, 0.2, 1.3, 2});
  EXPECT_DOUBLE_EQ(e2.delta1, 1.3);
  EXPECT_EQ(e2.mult1, 1);
  EXPECT_EQ(e2.mult2 + e2.mult3, 0);
}

TEST(SBlockEigen, MatchesDenseEigensolver) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    int d = 3 + trial % 10;
    SBlock S = random_any(rng, d);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(oracle::overlap_matrix(d, S.s0, S.s1, S.s2));
    auto e = eigenvalues(S);
    std::vector<double> closed;
    for (Index i = 0; i < e.mult1; ++i) closed.push_back(e.delta1);
    for (Index i = 0; i < e.mult2; ++i) closed.push_back(e.delta2);
    for (Index i = 0; i < e.mult3; ++i) closed.push_back(e.delta3);
    std::sort(closed.begin(), closed.end());
    ASSERT_EQ(static_cast<Index>(closed.size()), S.p());
    for (Index i = 0; i < S.p(); ++i) ASSERT_NEAR(closed[i], eig.eigenvalues()(i), 1e-10);
  }
}

TEST(SBlockMatvec, MatchesDenseProduct) {
  std::mt19937_64 rng(12);
  for (int d = 2; d <= 12; ++d) {
    SBlock S = random_any(rng, d);
    VectorXd v = random_vector(rng, S.p());
    EXPECT_LE((matvec(S, v) - oracle::overlap_matrix(d, S.s0, S.s1, S.s2) * v).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((matvec(SBlock{0, 0, 1, d}, v) - v).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((matvec(SBlock{1, 1, 1, d}, v) - VectorXd::Constant(S.p(), v.sum())).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(matvec(SBlock{0, 0, 1, 5}, VectorXd::Zero(9)), InvalidArgument);
}

TEST(SBlockInverse, DenseOracleAndClosure) {
  std::mt19937_64 rng(13);
  for (int d = 3; d <= 12; ++d) {
    SBlock S = random_pd(rng, d);
    SBlock T = inverse(S);
    MatrixXd dense_inv = oracle::overlap_matrix(d, S.s0, S.s1, S.s2).inverse();
    EXPECT_LE((materialize(T) - dense_inv).cwiseAbs().maxCoeff(), 1e-10 * dense_inv.cwiseAbs().maxCoeff());
    VectorXd v = random_vector(rng, S.p());
    EXPECT_LE((matvec(T, matvec(S, v)) - v).cwiseAbs().maxCoeff(), 1e-10);
  }
  SBlock c{0, 0, 2.5, 7};
  SBlock ci = inverse(c);
  EXPECT_NEAR(ci.s2, 0.4, 1e-15);
  EXPECT_NEAR(ci.s1, 0.0, 1e-15);
  EXPECT_NEAR(ci.s0, 0.0, 1e-15);
  EXPECT_THROW(inverse(SBlock{1, 1, 1, 6}), SingularError);
}

TEST(SBlockPower, PowersAgreeWithMatvecAndInverse) {
  std::mt19937_64 rng(14);
  for (int d = 3; d <= 12; ++d) {
    SBlock S = random_pd(rng, d);
    VectorXd v = random_vector(rng, S.p());
    EXPECT_LE((apply_power(S, v, 1.0) - matvec(S, v)).cwiseAbs().maxCoeff(), 1e-12 * (1 + S.s2 * S.p()));
    VectorXd twice = apply_power(S, apply_power(S, v, -0.5), -0.5);
    EXPECT_LE((twice - matvec(inverse(S), v)).cwiseAbs().maxCoeff(), 1e-10);
    VectorXd half = apply_power(S, apply_power(S, v, 0.5), 0.5);
    EXPECT_LE((half - matvec(S, v)).cwiseAbs().maxCoeff(), 1e-10 * (1 + S.s2 * S.p()));
    EXPECT_LE((apply_power(SBlock{0, 0, 1, d}, v, 0.5) - v).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(apply_power(SBlock{1, 1, 1, 6}, VectorXd::Ones(15), -0.5), SingularError);
}

TEST(SBlockPower, PseudoPowerOfSingularMember) {
  SBlock S{1, 1, 1, 5};  // rank one: 10 on the mean direction
  VectorXd v = VectorXd::LinSpaced(10, -1, 2);
  VectorXd mean_part = VectorXd::Constant(10, v.mean());
  EXPECT_LE((apply_pseudo_power(S, v, -1.0) - mean_part / 10.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(pseudo_quadratic(S, v), mean_part.squaredNorm() / 10.0, 1e-12);
}

TEST(GammaStar, FixesConstantsAndIsIdempotent) {
  std::mt19937_64 rng(15);
  for (int d = 4; d <= 12; ++d) {
    Index p = d * (d - 1) / 2;
    VectorXd c = VectorXd::Constant(p, 0.37);
    EXPECT_LE((gamma_star_apply(c, d) - c).cwiseAbs().maxCoeff(), 1e-14);
    VectorXd v = random_vector(rng, p);
    VectorXd once = gamma_star_apply(v, d);
    EXPECT_LE((gamma_star_apply(once, d) - once).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((once - oracle::dense_column_projector(d) * v).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(gamma_star_apply(VectorXd::Zero(3), 3), InvalidArgument);
}

TEST(SBlockPositivity, AllDimensionCondition) {
  EXPECT_TRUE(is_pd_all_d(0, 0, 1));
  EXPECT_FALSE(is_pd_all_d(0, 1, 1));
  EXPECT_TRUE(is_pd_all_d(0.1, 0.2, 0.5));
  double min_eig = 1e300;
  for (int d = 4; d <= 40; ++d) {
    auto e = eigenvalues(SBlock{0.1, 0.2, 0.5, d});
    EXPECT_GE(e.delta1, e.delta2);
    EXPECT_GE(e.delta2, e.delta3);
    min_eig = std::min({min_eig, e.delta1, e.delta2, e.delta3});
  }
  EXPECT_GT(min_eig, 0.0);
  // Conditions fail: some dimension has a non-positive eigenvalue.
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    double s0 = u(rng), s1 = u(rng), s2 = u(rng);
    bool any_bad = false;
    for (int d = 4; d <= 400 && !any_bad; ++d) {
      auto e = eigenvalues(SBlock{s0, s1, s2, d});
      any_bad = std::min({e.delta1, e.delta2, e.delta3}) <= 0;
    }
    if (is_pd_all_d(s0, s1, s2)) EXPECT_FALSE(any_bad) << s0 << " " << s1 << " " << s2;
  }
}

TEST(SBlockSpectral, OrthogonalityCompletenessAndSharedEigenvectors) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    int d = 4 + trial % 9;
    SBlock S = random_pd(rng, d);
    VectorXd v = random_vector(rng, S.p());
    SpectralParts parts = spectral_parts(v, d);
    EXPECT_LE((parts.within + parts.between + parts.mean - v).cwiseAbs().maxCoeff(), 1e-12);
    // Within part annihilates the between part.
    VectorXd cross = parts.between - gamma_star_apply(parts.between, d);
    EXPECT_LE(cross.norm(), 1e-12 * v.norm());
    auto e = eigenvalues(S);
    double quad = parts.within.squaredNorm() / e.delta3 + parts.between.squaredNorm() / e.delta2 +
                  parts.mean.squaredNorm() / e.delta1;
    double direct = v.dot(matvec(inverse(S), v));
    EXPECT_NEAR(quad, direct, 1e-10 * std::abs(direct));
    EXPECT_LE((matvec(S, parts.between) - e.delta2 * parts.between).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((matvec(S, parts.within) - e.delta3 * parts.within).cwiseAbs().maxCoeff(), 1e-10);
  }
}
