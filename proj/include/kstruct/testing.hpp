// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kstruct/covariance.hpp"
#include "kstruct/indexing.hpp"
#include "kstruct/kendall.hpp"
#include "kstruct/projection.hpp"
#include "kstruct/sblock.hpp"

namespace kstruct {

enum class Statistic { Euclidean, Max };
enum class Weighting { IdentityOverN, EstimatedCovariance };
enum class Estimator { Jackknife, StructuredJackknifeExchangeable, StructuredJackknifePartition };

std::string to_string(Statistic s);
std::string to_string(Weighting w);
std::string to_string(Estimator e);

struct TestOptions {
  Statistic statistic = Statistic::Euclidean;
  Weighting weighting = Weighting::EstimatedCovariance;
  Estimator estimator = Estimator::StructuredJackknifeExchangeable;
  Index replicates = 5000;
  std::uint64_t seed = 0;
  bool conservative = false;  // report (1 + exceedances) / (1 + N)
  bool bootstrap = false;     // multiplier bootstrap for the identity weighting
};

struct SpectrumTerm {
  double lambda = 0.0;
  Index multiplicity = 0;
};

// Merge eigenvalues within relative distance 1e-8 and drop those below
// 1e-10 times the largest. Returned in decreasing order.
std::vector<SpectrumTerm> group_spectrum(const Eigen::VectorXd& values);

// The weighting matrix A of the statistics.
class Weight {
 public:
  static Weight identity_over_n(Index n, Index p);
  static Weight structured(const SBlock& A);
  static Weight dense(const Eigen::MatrixXd& A);
  static Weight from_estimate(const CovarianceEstimate& A);

  Index p() const { return p_; }
  double quadratic(const Eigen::VectorXd& r) const;   // r' A^+ r
  Eigen::VectorXd whiten(const Eigen::VectorXd& r) const;  // A^{-1/2} r, principal root
  Eigen::MatrixXd whitening_matrix() const;
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  enum class Kind { ScaledIdentity, Structured, Dense };
  Kind kind_ = Kind::ScaledIdentity;
  Index p_ = 0;
  double n_ = 1.0;
  SBlock sblock_;
  Eigen::MatrixXd inverse_;
  Eigen::MatrixXd inverse_sqrt_;
  std::vector<std::string> warnings_;
};

double statistic_euclidean(const TauVector& tau, const TauVector& theta, const Weight& weight);
double statistic_max(const TauVector& tau, const TauVector& theta, const Weight& weight);

double pvalue_chisq(double E, Index p, Index L);

// Monte Carlo p-value from an exceedance count.
double mc_pvalue(Index exceed, Index N, bool conservative);

double pvalue_mixture_mc(double E, const std::vector<SpectrumTerm>& spectrum, Index N,
                         std::uint64_t seed, bool conservative = false);

// Spectrum of (I - Gamma) S for S in the structured class: the within and
// between eigenvalues with multiplicities p - d and d - 1.
std::vector<SpectrumTerm> exchangeable_spectrum(const SBlock& S);

// Zero-mean Gaussian draws with a prescribed covariance.
class NullSampler {
 public:
  // Covariance `cov` (PSD, clipped) via its symmetric square root.
  static NullSampler dense(const Eigen::MatrixXd& cov);
  // Covariance I - P for an orthogonal projector P.
  static NullSampler projector(const ProjectionOperator& P);
  // Covariance S(a0, a1, a2) from one shared normal, one normal per variable
  // and one per pair. Needs a1 >= a0 >= 0 and a2 - 2 a1 + a0 >= 0; otherwise
  // falls back to the spectral construction.
  static NullSampler additive(const SBlock& target);
  // Covariance (I - Gamma) S: within part scaled by sqrt(delta3), between part
  // by sqrt(delta2).
  static NullSampler projection_construction(const SBlock& S);

  Index p() const { return p_; }
  const std::string& method() const { return method_; }
  bool used_fallback() const { return fallback_; }
  void draw(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const;
  // N draws as columns; replicate blocks have their own streams, so the
  // result depends only on (seed, N).
  Eigen::MatrixXd draw_many(Index N, std::uint64_t seed) const;

 private:
  enum class Kind { Dense, Projector, Additive, Spectral };
  Kind kind_ = Kind::Dense;
  Index p_ = 0;
  int d_ = 0;
  std::string method_;
  bool fallback_ = false;
  Eigen::MatrixXd factor_;
  std::optional<ProjectionOperator> projector_;
  double scale_[3] = {0, 0, 0};  // additive: sd of shared, per-variable, per-pair
                                 // spectral: sqrt of mean, between, within eigenvalues
};

double pvalue_max_mc(double M, const NullSampler& sampler, Index N, std::uint64_t seed,
                     bool conservative = false);

// N bootstrap draws (p x N) of 2 (I - P) / sqrt(n) sum_r (tau^(r) - tau) w_r,
// w ~ N(0, I_n); P must be the orthogonal projector B B^+.
Eigen::MatrixXd multiplier_bootstrap_replicates(const LeaveOneOutTaus& loo, const ProjectionOperator& P,
                                                Index N, std::uint64_t seed);
Eigen::MatrixXd multiplier_bootstrap_replicates(const Dataset& data, const DesignMatrix& B, Index N,
                                                std::uint64_t seed);

struct Hypothesis {
  // A design matrix states tau = B beta; a partition states partial
  // exchangeability, tested through its block-membership matrix.
  std::variant<DesignMatrix, Partition> value;
  std::string label;

  bool is_partition() const { return std::holds_alternative<Partition>(value); }
};

struct TestReport {
  std::string statistic;
  std::string weighting;
  std::string estimator;
  std::string hypothesis;
  std::string method;
  double value = 0.0;
  double p_value = 1.0;
  Index replicates = 0;
  std::uint64_t seed = 0;
  bool conservative = false;
  Index n = 0;
  int d = 0;
  Index p = 0;
  Index L = 0;
  std::vector<SpectrumTerm> eigenvalues;
  std::vector<std::string> warnings;
  TauVector tau;
  TauVector theta;
  Eigen::VectorXd beta;
  std::vector<std::string> beta_labels;
};

TestReport run_test(const LeaveOneOutTaus& loo, const Hypothesis& hypothesis, const TestOptions& options);
TestReport run_test(const Dataset& data, const Hypothesis& hypothesis, const TestOptions& options);

}  // namespace kstruct
