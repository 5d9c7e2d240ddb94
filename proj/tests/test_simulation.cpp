// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "kstruct/errors.hpp"
#include "kstruct/simulation.hpp"

using namespace kstruct;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

StudyConfig small_study(Index reps) {
  StudyConfig cfg;
  cfg.seed = 2024;
  cfg.repetitions = reps;
  ScenarioConfig a;
  a.n = 60;
  a.d = 5;
  a.structure = TauStructure::equicorrelated(0.3);
  a.panel = "equi";
  ScenarioConfig b = a;
  b.d = 6;
  b.structure = TauStructure::block_preset(6, true);
  b.panel = "blocks";
  cfg.scenarios = {a, b};
  StudyTest e;
  e.label = "E";
  e.hypothesis = StudyHypothesis::Exchangeable;
  StudyTest m;
  m.label = "M";
  m.hypothesis = StudyHypothesis::Ones;
  m.options.statistic = Statistic::Max;
  m.options.weighting = Weighting::IdentityOverN;
  m.options.estimator = Estimator::Jackknife;
  m.options.replicates = 300;
  cfg.tests = {e, m};
  return cfg;
}

}  // namespace

TEST(TauToPearson, SineMap) {
  EXPECT_EQ(tau_to_pearson(0.0), 0.0);
  EXPECT_DOUBLE_EQ(tau_to_pearson(1.0), 1.0);
  EXPECT_NEAR(tau_to_pearson(0.6), 0.8090169944, 1e-10);
  MatrixXd T = MatrixXd::Constant(3, 3, 0.6);
  T.diagonal().setOnes();
  MatrixXd R = tau_to_pearson(T);
  EXPECT_TRUE(R.diagonal().isOnes());
  EXPECT_NEAR(R(0, 2), std::sin(0.3 * M_PI), 1e-15);
}

TEST(TauMatrixBuilder, EquicorrelatedBlocksAndDepartures) {
  Departure none;
  MatrixXd T = build_tau_matrix(3, TauStructure::equicorrelated(0.3), none);
  EXPECT_TRUE(T.diagonal().isOnes());
  EXPECT_DOUBLE_EQ(T(0, 1), 0.3);
  EXPECT_DOUBLE_EQ(T(1, 2), 0.3);
  MatrixXd B = build_tau_matrix(6, TauStructure::block_preset(6, true), none);
  EXPECT_NEAR(B(0, 1), 0.4, 1e-15);
  EXPECT_NEAR(B(0, 2), 0.25, 1e-15);
  EXPECT_NEAR(B(0, 4), 0.10, 1e-15);
  EXPECT_NEAR(B(2, 3), 0.4, 1e-15);
  MatrixXd U = build_tau_matrix(6, TauStructure::block_preset(6, false), none);
  EXPECT_NEAR(U(0, 1), 0.25, 1e-15);  // sizes 1, 2, 3
  EXPECT_NEAR(U(1, 2), 0.4, 1e-15);
  EXPECT_NEAR(U(0, 5), 0.10, 1e-15);

  Departure single{Departure::Kind::Single, 0.1};
  MatrixXd S = build_tau_matrix(5, TauStructure::equicorrelated(0.3), single);
  MatrixXd base = build_tau_matrix(5, TauStructure::equicorrelated(0.3), none);
  EXPECT_NEAR(S(0, 1), 0.4, 1e-15);
  EXPECT_EQ(((S - base).array().abs() > 0).count(), 2);
  Departure column{Departure::Kind::Column, 0.1};
  MatrixXd C = build_tau_matrix(5, TauStructure::equicorrelated(0.3), column);
  EXPECT_EQ(C.row(0), base.row(0));
  EXPECT_EQ(C.col(0), base.col(0));
  EXPECT_NEAR(C(2, 4), 0.4, 1e-15);
  EXPECT_TRUE(C.isApprox(C.transpose()));
  Departure big{Departure::Kind::Single, 0.5};
  EXPECT_THROW(build_tau_matrix(4, TauStructure::equicorrelated(0.7), big), InvalidArgument);
}

TEST(GaussianSampler, IndependentColumns) {
  Rng rng = make_rng(1);
  MatrixXd T = MatrixXd::Identity(4, 4);
  Dataset data = sample_gaussian_with_tau(T, 2000, rng);
  VectorXd tau = kendall_tau_vector(data);
  const double se = std::sqrt(2.0 * (2 * 2000 + 5) / (9.0 * 2000 * 1999));
  EXPECT_LE(tau.cwiseAbs().maxCoeff(), 3.5 * se);
  VectorXd mean = data.values.colwise().mean();
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 4.0 / std::sqrt(2000.0));
  for (int c = 0; c < 4; ++c) {
    double var = (data.values.col(c).array() - mean(c)).square().sum() / 1999.0;
    EXPECT_NEAR(var, 1.0, 0.1);
  }
}

TEST(GaussianSampler, RecoversKendallStructure) {
  Rng rng = make_rng(2);
  Departure none;
  Dataset data = sample_gaussian_with_tau(build_tau_matrix(4, TauStructure::equicorrelated(0.6), none), 5000, rng);
  EXPECT_NEAR(kendall_tau_vector(data).mean(), 0.6, 0.02);
  for (double tau : {0.0, 0.3, 0.6}) {
    Rng r2 = make_rng(3, {static_cast<std::uint64_t>(tau * 10)});
    Dataset d2 = sample_gaussian_with_tau(build_tau_matrix(5, TauStructure::equicorrelated(tau), none), 2000, r2);
    EXPECT_LE((kendall_tau_vector(d2).array() - tau).abs().maxCoeff(), 0.02 + 4 * 0.015) << tau;
  }
  Rng r3 = make_rng(4);
  Dataset blocks = sample_gaussian_with_tau(build_tau_matrix(6, TauStructure::block_preset(6, true), none), 2000, r3);
  MatrixXd T = tau_matrix(kendall_tau_vector(blocks));
  EXPECT_NEAR(T(0, 1), 0.4, 0.05);
  EXPECT_NEAR(T(0, 5), 0.1, 0.05);
}

TEST(GaussianSampler, NegativeEquicorrelationAndIndefinite) {
  Departure none;
  Rng rng = make_rng(5);
  MatrixXd ok = build_tau_matrix(4, TauStructure::equicorrelated(-0.1), none);
  EXPECT_NO_THROW(sample_gaussian_with_tau(ok, 50, rng));
  MatrixXd bad = build_tau_matrix(5, TauStructure::equicorrelated(-0.5), none);
  try {
    sample_gaussian_with_tau(bad, 50, rng);
    FAIL();
  } catch (const NotPositiveDefinite& e) {
    EXPECT_LT(e.min_eigenvalue(), 0.0);
  }
}

TEST(Study, ReproducibleAndShardable) {
  StudyConfig cfg = small_study(30);
  StudyResult full = run_study(cfg);
  StudyResult again = run_study(cfg);
  StudyResult a = run_study(cfg, 0, 11);
  StudyResult b = run_study(cfg, 11, 30);
  StudyResult merged = merge_results(a, b);
  ASSERT_EQ(full.cells.size(), 4u);
  for (std::size_t i = 0; i < full.cells.size(); ++i) {
    EXPECT_EQ(full.cells[i].rejections, again.cells[i].rejections);
    EXPECT_EQ(full.cells[i].rejections, merged.cells[i].rejections);
    EXPECT_EQ(full.cells[i].valid, merged.cells[i].valid);
    EXPECT_EQ(full.cells[i].valid + full.cells[i].failed, 30);
  }
  EXPECT_TRUE(full.completed);
  EXPECT_EQ(merged.rep_begin, 0);
  EXPECT_EQ(merged.rep_end, 30);
  EXPECT_THROW(merge_results(a, a), InvalidArgument);
}

TEST(Study, CancellationMarksIncomplete) {
  StudyConfig cfg = small_study(20);
  std::atomic<bool> cancel{true};
  StudyResult r = run_study(cfg, 0, 20, &cancel);
  EXPECT_FALSE(r.completed);
  for (const auto& c : r.cells) EXPECT_EQ(c.valid + c.failed, 0);
}

TEST(Study, CellStandardErrors) {
  CellResult c{0, 0, 25, 100, 3};
  EXPECT_DOUBLE_EQ(c.rate(), 0.25);
  EXPECT_NEAR(c.se(), std::sqrt(0.25 * 0.75 / 100), 1e-15);
}

TEST(Study, NullCalibrationOfChiSquareTest) {
  StudyConfig cfg;
  cfg.seed = 77;
  cfg.repetitions = 600;
  ScenarioConfig sc;
  sc.n = 150;
  sc.d = 5;
  sc.structure = TauStructure::equicorrelated(0.3);
  cfg.scenarios = {sc};
  StudyTest t;
  t.label = "E";
  t.hypothesis = StudyHypothesis::Exchangeable;
  cfg.tests = {t};
  StudyResult r = run_study(cfg);
  const double se = std::sqrt(0.05 * 0.95 / 600);
  EXPECT_NEAR(r.cells[0].rate(), 0.05, 3 * se);
}

TEST(Study, HypothesisBuilders) {
  ScenarioConfig sc;
  sc.d = 6;
  sc.structure = TauStructure::block_preset(6, true);
  Hypothesis blocks = make_study_hypothesis(sc, StudyHypothesis::Blocks);
  ASSERT_TRUE(blocks.is_partition());
  EXPECT_EQ(std::get<Partition>(blocks.value).num_groups(), 3);
  Hypothesis design = make_study_hypothesis(sc, StudyHypothesis::BlockDesign);
  ASSERT_FALSE(design.is_partition());
  EXPECT_EQ(std::get<DesignMatrix>(design.value).L(), 6);
  Hypothesis ones = make_study_hypothesis(sc, StudyHypothesis::Ones);
  EXPECT_EQ(std::get<DesignMatrix>(ones.value).L(), 1);
}
