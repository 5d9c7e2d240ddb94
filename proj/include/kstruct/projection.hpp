// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kstruct/covariance.hpp"
#include "kstruct/indexing.hpp"
#include "kstruct/kendall.hpp"
#include "kstruct/sblock.hpp"

namespace kstruct {

enum class ProjectionKind { GeneralGamma, BlockMembership, ExchangeableGamma, GammaStar };

// Oblique or orthogonal projector onto the column space of a design matrix.
class ProjectionOperator {
 public:
  static ProjectionOperator exchangeable(Index p);
  static ProjectionOperator gamma_star(int d);
  static ProjectionOperator membership(const DesignMatrix& B);
  // P v = B (left v) with `left` an L x p matrix.
  static ProjectionOperator general(const DesignMatrix& B, Eigen::MatrixXd left);

  ProjectionKind kind() const { return kind_; }
  Index p() const { return p_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd residual(const Eigen::VectorXd& v) const { return v - apply(v); }
  // Column-wise application to a p x m matrix.
  Eigen::MatrixXd apply_columns(const Eigen::MatrixXd& V) const;
  Eigen::MatrixXd matrix() const;
  // beta with apply(v) = B beta; unavailable for GammaStar.
  Eigen::VectorXd coefficients(const Eigen::VectorXd& v) const;

 private:
  ProjectionKind kind_ = ProjectionKind::ExchangeableGamma;
  Index p_ = 0;
  int d_ = 0;
  std::vector<int> column_of_row_;
  Eigen::VectorXd counts_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd left_;
};

// Moore-Penrose inverse (L x p). Closed form for block-membership matrices.
Eigen::MatrixXd pseudoinverse_design(const DesignMatrix& B);

// Moore-Penrose inverse of a general matrix through its SVD, with singular
// values below 1e-10 times the largest treated as zero.
Eigen::MatrixXd pseudoinverse_svd(const Eigen::MatrixXd& M);

// Closed-form inverse of the p x d pair-membership matrix (d >= 3).
Eigen::MatrixXd pair_membership_pseudoinverse(int d);

// Orthogonal projector B B^+.
ProjectionOperator gamma_projection(const DesignMatrix& B);
// B (B' A^+ B)^{-1} B' A^+; reduces to B B^+ when A is invariant under the
// partition whose block-membership matrix is B.
ProjectionOperator gamma_projection(const DesignMatrix& B, const CovarianceEstimate& A);
ProjectionOperator gamma_projection(const DesignMatrix& B, const RepairedCovariance& A);

// True when both membership matrices group the rows identically.
bool same_row_grouping(const DesignMatrix& a, const DesignMatrix& b);

TauVector constrained_estimate(const TauVector& tau, const ProjectionOperator& projector);
TauVector theta_star(const TauVector& tau);

struct DesignDiagnostics {
  bool one_nonzero_per_row = false;
  std::optional<double> m2_bound;             // 1 + (c/a)^2
  std::optional<double> m1_lower_bound;       // (2/3)(sigma2 - sigma1)
  std::optional<double> m1_diagonal;          // sigma2 - delta1(sigma)/p
  std::vector<std::string> notes;
};

DesignDiagnostics check_design_conditions(const DesignMatrix& B,
                                          const std::optional<SBlock>& sigma = std::nullopt);

}  // namespace kstruct
