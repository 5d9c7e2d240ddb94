// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the kstruct executable. Argument parsing
// lives in tools/kstruct_cli.cpp; everything here is callable from tests.

#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kstruct/kendall.hpp"
#include "kstruct/testing.hpp"

namespace kstruct {

struct DetrendResult {
  Dataset residuals;
  Eigen::VectorXd slopes;
  Eigen::VectorXd intercepts;
};

// Per-column least-squares fit on one covariate; residuals keep the column
// order. Throws ConstantCovariate when the covariate has no spread.
DetrendResult detrend_linear(const Dataset& data, const Eigen::VectorXd& covariate);
// Covariate 1, 2, ..., n.
DetrendResult detrend_linear(const Dataset& data);

enum class HypothesisSource { Exchangeable, Partition, Design, DiagonalFree };

struct TestCommand {
  std::string data;
  std::vector<int> columns;  // 1-based; empty keeps all
  HypothesisSource source = HypothesisSource::Exchangeable;
  std::string hypothesis_file;
  std::string statistic = "euclidean";
  std::string weighting = "sigma";
  std::string estimator = "structured";  // structured | jackknife
  Index replicates = 5000;
  std::uint64_t seed = 0;
  bool conservative = false;
  bool bootstrap = false;
  bool jitter_ties = false;
  bool detrend = false;
  bool ljung_box = false;
  std::string out;  // report path; empty prints the report to stdout
};

// Builds the hypothesis and estimator choice from the source, the optional
// file and the estimator family.
std::pair<Hypothesis, Estimator> resolve_hypothesis(HypothesisSource source, const std::string& file, int d,
                                                    const std::string& estimator);

TestReport cmd_test(const TestCommand& cmd, std::ostream& log);

struct SimulateCommand {
  std::string config;
  std::string out_dir;
  std::optional<std::pair<Index, Index>> shard;  // repetitions [first, last), 0-based
  bool desk_scale = false;
};

// Parses "A:B" into [A, B).
std::pair<Index, Index> parse_shard(const std::string& text);

// Returns true when every repetition finished (false after cancellation).
bool cmd_simulate(const SimulateCommand& cmd, std::ostream& log, const std::atomic<bool>* cancel = nullptr);

struct DetrendCommand {
  std::string data;
  std::vector<int> columns;
  int covariate_column = 0;  // 1-based; 0 uses the row index
  std::string out;
};

void cmd_detrend(const DetrendCommand& cmd, std::ostream& log);

// Combines shard directories written by cmd_simulate into out_dir.
void cmd_merge(const std::vector<std::string>& shard_dirs, const std::string& out_dir, std::ostream& log);

}  // namespace kstruct
