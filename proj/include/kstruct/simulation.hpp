// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kstruct/indexing.hpp"
#include "kstruct/kendall.hpp"
#include "kstruct/testing.hpp"

namespace kstruct {

struct TauStructure {
  enum class Kind { Equicorrelated, Block, Custom };
  Kind kind = Kind::Equicorrelated;
  double tau = 0.0;
  std::vector<int> sizes;         // Block: group sizes in variable order
  Eigen::MatrixXd block_values;   // Block: K x K Kendall values
  Eigen::MatrixXd custom;         // Custom: d x d Kendall matrix

  static TauStructure equicorrelated(double tau);
  static TauStructure block(std::vector<int> sizes, Eigen::MatrixXd values);
  // Three groups with values 0.4 - 0.15 |r - s|; balanced sizes d/3 each,
  // unbalanced sizes d/6, d/3, d/2.
  static TauStructure block_preset(int d, bool balanced);
  static TauStructure custom_matrix(Eigen::MatrixXd T);

  // Groups implied by the structure (one group unless Block).
  Partition partition(int d) const;
};

struct Departure {
  enum class Kind { None, Single, Column };
  Kind kind = Kind::None;
  double delta = 0.0;
};

double tau_to_pearson(double tau);
Eigen::MatrixXd tau_to_pearson(const Eigen::MatrixXd& T);

Eigen::MatrixXd build_tau_matrix(int d, const TauStructure& structure, const Departure& departure);

// n rows of a centred Gaussian vector with Kendall matrix T.
Dataset sample_gaussian_with_tau(const Eigen::MatrixXd& T, Index n, Rng& rng);

enum class StudyHypothesis {
  Exchangeable,  // partial exchangeability with one group
  Ones,          // tau = beta 1_p as a design hypothesis
  Blocks,        // partial exchangeability w.r.t. the structure's groups
  BlockDesign,   // block-membership design of the structure's groups
};

std::string to_string(StudyHypothesis h);

struct StudyTest {
  std::string label;
  TestOptions options;
  StudyHypothesis hypothesis = StudyHypothesis::Exchangeable;
};

struct ScenarioConfig {
  std::string panel;  // table panel, e.g. structure and departure
  Index n = 100;
  int d = 5;
  TauStructure structure;
  Departure departure;
};

struct StudyConfig {
  std::uint64_t seed = 1;
  Index repetitions = 2500;
  double alpha = 0.05;
  std::vector<ScenarioConfig> scenarios;
  std::vector<StudyTest> tests;
};

struct CellResult {
  Index scenario = 0;
  Index test = 0;
  Index rejections = 0;
  Index valid = 0;
  Index failed = 0;

  double rate() const { return valid ? static_cast<double>(rejections) / valid : 0.0; }
  double se() const;
};

struct StudyResult {
  std::vector<CellResult> cells;  // scenario-major, test-minor
  Index rep_begin = 0;
  Index rep_end = 0;
  Index completed_repetitions = 0;  // per scenario, summed over scenarios
  bool completed = true;
  double seconds = 0.0;
  std::vector<double> scenario_seconds;
};

Hypothesis make_study_hypothesis(const ScenarioConfig& scenario, StudyHypothesis kind);

// Runs repetitions [rep_begin, rep_end) of every scenario. Repetition r of
// scenario s draws its data from stream (seed, s, r) and test t uses the seed
// derived from (seed, s, r, t + 1), so shards and worker counts do not change
// the outcome.
StudyResult run_study(const StudyConfig& config, Index rep_begin, Index rep_end,
                      const std::atomic<bool>* cancel = nullptr,
                      const std::function<void(Index, Index)>& progress = {});
StudyResult run_study(const StudyConfig& config);

// Adds counts of results computed on disjoint repetition ranges.
StudyResult merge_results(const StudyResult& a, const StudyResult& b);

}  // namespace kstruct
