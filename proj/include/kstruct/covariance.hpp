// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kstruct/indexing.hpp"
#include "kstruct/kendall.hpp"
#include "kstruct/runtime.hpp"
#include "kstruct/sblock.hpp"

namespace kstruct {

enum class CovarianceKind { Dense, ExchangeableStructured, PartitionStructured };

// Estimate of cov(tau-hat). Unless scaled_by_n is set, it estimates the
// finite-sample covariance rather than n times it.
struct CovarianceEstimate {
  CovarianceKind kind = CovarianceKind::Dense;
  Eigen::MatrixXd dense;            // Dense and PartitionStructured
  SBlock structured;                // ExchangeableStructured
  std::optional<Partition> partition;  // the invariance structure, if any
  bool scaled_by_n = false;

  Index p() const;
  Eigen::MatrixXd to_dense(int max_d = kDefaultMaterializeCap) const;
  CovarianceEstimate scaled(double factor) const;
};

CovarianceEstimate jackknife_cov(const LeaveOneOutTaus& loo);
CovarianceEstimate jackknife_cov(const Dataset& data);

CovarianceEstimate structured_jackknife_exchangeable(const LeaveOneOutTaus& loo);
CovarianceEstimate structured_jackknife_exchangeable(const Dataset& data);

CovarianceEstimate structured_jackknife_partition(const LeaveOneOutTaus& loo, const Partition& partition);
CovarianceEstimate structured_jackknife_partition(const Dataset& data, const Partition& partition);

// Class id of every entry (k, l) of a p x p matrix (row-major, size p*p).
// Two entries share a class when a partition-preserving relabelling of the
// variables maps one pair of pairs onto the other.
std::vector<int> partition_entry_classes(const Partition& partition, int* num_classes = nullptr);

// Replaces every entry by the mean of its class.
Eigen::MatrixXd class_average(const Eigen::MatrixXd& matrix, const Partition& partition);

struct RepairedCovariance {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd eigenvalues;  // clipped, ascending
  Eigen::MatrixXd eigenvectors;
  double min_original_eigenvalue = 0.0;
  // Set when an eigenvalue below -1e-10 * lambda_max had to be clipped.
  bool significant_negative = false;

  double threshold(double rel_tol = 1e-10) const;
  Index rank(double rel_tol = 1e-10) const;
  Eigen::MatrixXd pseudo_inverse(double rel_tol = 1e-10) const;
  Eigen::MatrixXd pseudo_inverse_sqrt(double rel_tol = 1e-10) const;
  Eigen::MatrixXd sqrt() const;
};

RepairedCovariance pd_repair(const Eigen::MatrixXd& symmetric);

// Draws one observation of a d-variate distribution with continuous margins
// (only the induced copula matters) into the output vector.
using CopulaSampler = std::function<void(Rng&, Eigen::Ref<Eigen::VectorXd>)>;

struct PopulationSigma {
  SBlock limit;                      // n -> infinity limit of n cov(tau-hat)
  std::array<double, 3> limit_se{};  // indexed by overlap count
  SBlock finite;                     // cov(tau-hat) at sample size n_finite
  std::array<double, 3> finite_se{};
  Index n_finite = 0;
  double beta = 0.0;                 // common Kendall value
  double beta_se = 0.0;
  // theta[l][m]: Monte Carlo estimates of the six copula expectations for
  // overlap count l; m = 0..5.
  std::array<std::array<double, 6>, 3> theta{};
  Index mc_reps = 0;
};

// Monte Carlo evaluation of the exchangeable covariance coefficients from
// copula expectations. Uses three independent draws per replicate and the
// first four coordinates. n_finite = 0 skips the finite-sample version.
PopulationSigma population_sigma_mc(const CopulaSampler& sampler, int d, Index mc_reps,
                                    std::uint64_t seed, Index n_finite = 0);

}  // namespace kstruct
