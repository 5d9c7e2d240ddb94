// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/projection.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>

#include "kstruct/errors.hpp"

namespace kstruct {

ProjectionOperator ProjectionOperator::exchangeable(Index p) {
  ProjectionOperator op;
  op.kind_ = ProjectionKind::ExchangeableGamma;
  op.p_ = p;
  op.d_ = dimension_of_pairs(p);
  return op;
}

ProjectionOperator ProjectionOperator::gamma_star(int d) {
  if (d < 4) throw InvalidArgument("the pair-sum projection needs d >= 4");
  ProjectionOperator op;
  op.kind_ = ProjectionKind::GammaStar;
  op.p_ = num_pairs(d);
  op.d_ = d;
  return op;
}

ProjectionOperator ProjectionOperator::membership(const DesignMatrix& B) {
  if (!B.is_block_membership) throw InvalidArgument("design matrix is not a block-membership matrix");
  ProjectionOperator op;
  op.kind_ = ProjectionKind::BlockMembership;
  op.p_ = B.p();
  op.d_ = B.d();
  op.column_of_row_ = B.column_of_row;
  op.counts_ = B.entries.colwise().sum().transpose();
  return op;
}

ProjectionOperator ProjectionOperator::general(const DesignMatrix& B, Eigen::MatrixXd left) {
  if (left.rows() != B.L() || left.cols() != B.p()) {
    throw InvalidArgument("left factor has the wrong shape");
  }
  ProjectionOperator op;
  op.kind_ = ProjectionKind::GeneralGamma;
  op.p_ = B.p();
  op.d_ = B.d();
  op.design_ = B.entries;
  op.left_ = std::move(left);
  return op;
}

Eigen::VectorXd ProjectionOperator::coefficients(const Eigen::VectorXd& v) const {
  if (v.size() != p_) throw InvalidArgument("vector length does not match the projector");
  switch (kind_) {
    case ProjectionKind::ExchangeableGamma:
      return Eigen::VectorXd::Constant(1, v.mean());
    case ProjectionKind::BlockMembership: {
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(counts_.size());
      for (Index k = 0; k < p_; ++k) beta(column_of_row_[k]) += v(k);
      return beta.cwiseQuotient(counts_);
    }
    case ProjectionKind::GeneralGamma:
      return left_ * v;
    case ProjectionKind::GammaStar:
      break;
  }
  throw InvalidArgument("the pair-sum projection has no design coefficients");
}

Eigen::VectorXd ProjectionOperator::apply(const Eigen::VectorXd& v) const {
  if (v.size() != p_) throw InvalidArgument("vector length does not match the projector");
  switch (kind_) {
    case ProjectionKind::ExchangeableGamma:
      return gamma_apply(v);
    case ProjectionKind::GammaStar:
      return gamma_star_apply(v, d_);
    case ProjectionKind::BlockMembership: {
      Eigen::VectorXd beta = coefficients(v);
      Eigen::VectorXd out(p_);
      for (Index k = 0; k < p_; ++k) out(k) = beta(column_of_row_[k]);
      return out;
    }
    case ProjectionKind::GeneralGamma:
      return design_ * (left_ * v);
  }
  return v;
}

Eigen::MatrixXd ProjectionOperator::apply_columns(const Eigen::MatrixXd& V) const {
  if (kind_ == ProjectionKind::GeneralGamma) return design_ * (left_ * V);
  Eigen::MatrixXd out(V.rows(), V.cols());
  for (Index c = 0; c < V.cols(); ++c) out.col(c) = apply(V.col(c));
  return out;
}

Eigen::MatrixXd ProjectionOperator::matrix() const {
  if (kind_ == ProjectionKind::GeneralGamma) return design_ * left_;
  return apply_columns(Eigen::MatrixXd::Identity(p_, p_));
}

Eigen::MatrixXd pseudoinverse_svd(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = sv.size() ? 1e-10 * sv(0) : 0.0;
  Eigen::VectorXd inv = sv.unaryExpr([tol](double s) { return s > tol ? 1.0 / s : 0.0; });
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::MatrixXd pseudoinverse_design(const DesignMatrix& B) {
  if (B.is_block_membership) {
    Eigen::VectorXd counts = B.entries.colwise().sum().transpose();
    return counts.cwiseInverse().asDiagonal() * B.entries.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B.entries, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-10 * sv(0);
  if (sv(sv.size() - 1) <= tol) {
    throw RankDeficient("design matrix is numerically rank deficient");
  }
  return svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

Eigen::MatrixXd pair_membership_pseudoinverse(int d) {
  if (d < 3) throw InvalidArgument("the pair-membership inverse needs d >= 3");
  const Eigen::MatrixXd Bstar = pair_membership_matrix(d);
  return Bstar.transpose() / (d - 2.0) -
         Eigen::MatrixXd::Constant(d, Bstar.rows(), 1.0 / ((d - 1.0) * (d - 2.0)));
}

bool same_row_grouping(const DesignMatrix& a, const DesignMatrix& b) {
  if (!a.is_block_membership || !b.is_block_membership) return false;
  if (a.p() != b.p() || a.L() != b.L()) return false;
  std::map<int, int> forward;
  for (Index k = 0; k < a.p(); ++k) {
    auto [it, inserted] = forward.emplace(a.column_of_row[k], b.column_of_row[k]);
    if (!inserted && it->second != b.column_of_row[k]) return false;
  }
  return true;
}

ProjectionOperator gamma_projection(const DesignMatrix& B) {
  if (B.L() == 1 && B.is_block_membership) return ProjectionOperator::exchangeable(B.p());
  if (B.is_block_membership) return ProjectionOperator::membership(B);
  return ProjectionOperator::general(B, pseudoinverse_design(B));
}

namespace {

// left = (B' W B)^{-1} B' W for a symmetric weight W given through W B.
ProjectionOperator weighted_projection(const DesignMatrix& B, const Eigen::MatrixXd& WB) {
  Eigen::MatrixXd gram = B.entries.transpose() * WB;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(top > 0) || eig.eigenvalues().minCoeff() <= 1e-12 * top) {
    throw SingularError("B' A^-1 B is numerically singular");
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::MatrixXd left = ldlt.solve(WB.transpose());
  return ProjectionOperator::general(B, std::move(left));
}

}  // namespace

ProjectionOperator gamma_projection(const DesignMatrix& B, const RepairedCovariance& A) {
  if (A.matrix.rows() != B.p()) throw InvalidArgument("covariance size does not match the design");
  return weighted_projection(B, A.pseudo_inverse() * B.entries);
}

ProjectionOperator gamma_projection(const DesignMatrix& B, const CovarianceEstimate& A) {
  if (A.p() != B.p()) throw InvalidArgument("covariance size does not match the design");
  if (A.partition && B.is_block_membership && A.kind != CovarianceKind::Dense) {
    if (B.L() == 1 && A.partition->num_groups() == 1) return ProjectionOperator::exchangeable(B.p());
    bool matches = false;
    try {
      matches = same_row_grouping(B, block_membership_matrix(*A.partition));
    } catch (const InvalidArgument&) {
      matches = false;
    }
    if (matches) return gamma_projection(B);
  }
  if (A.kind == CovarianceKind::ExchangeableStructured) {
    Eigen::MatrixXd WB(B.p(), B.L());
    for (Index c = 0; c < B.L(); ++c) {
      WB.col(c) = apply_pseudo_power(A.structured, B.entries.col(c), -1.0);
    }
    return weighted_projection(B, WB);
  }
  return gamma_projection(B, pd_repair(A.dense));
}

TauVector constrained_estimate(const TauVector& tau, const ProjectionOperator& projector) {
  return projector.apply(tau);
}

TauVector theta_star(const TauVector& tau) {
  return gamma_star_apply(tau, dimension_of_pairs(tau.size()));
}

DesignDiagnostics check_design_conditions(const DesignMatrix& B, const std::optional<SBlock>& sigma) {
  DesignDiagnostics out;
  bool one_per_row = true;
  double smallest = INFINITY;
  double largest = 0.0;
  for (Index k = 0; k < B.p(); ++k) {
    int nonzero = 0;
    for (Index c = 0; c < B.L(); ++c) {
      double v = std::abs(B.entries(k, c));
      if (v != 0.0) {
        ++nonzero;
        smallest = std::min(smallest, v);
        largest = std::max(largest, v);
      }
    }
    if (nonzero != 1) one_per_row = false;
  }
  out.one_nonzero_per_row = one_per_row;
  if (one_per_row) {
    out.m2_bound = 1.0 + (largest / smallest) * (largest / smallest);
  } else {
    out.notes.push_back("rows with other than one nonzero entry: fast (M.2) bound unavailable");
  }

  const bool is_ones = B.L() == 1 && (B.entries.array() == 1.0).all();
  if (sigma) {
    if (!is_ones) {
      out.notes.push_back("(M.1) diagnostics are only available for the all-ones design");
    } else {
      if (sigma->p() != B.p()) throw InvalidArgument("sigma dimension does not match the design");
      out.m1_lower_bound = 2.0 / 3.0 * (sigma->s2 - sigma->s1);
      out.m1_diagonal = sigma->s2 - eigenvalues(*sigma).delta1 / static_cast<double>(B.p());
    }
  }
  return out;
}

}  // namespace kstruct
