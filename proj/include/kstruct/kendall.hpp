// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "kstruct/runtime.hpp"

namespace kstruct {

// n observations (rows) of a d-variate vector (columns).
struct Dataset {
  Eigen::MatrixXd values;

  Index n() const { return values.rows(); }
  int d() const { return static_cast<int>(values.cols()); }
};

// Kendall vectors are plain p-vectors in the column-stacked pair order.
using TauVector = Eigen::VectorXd;

struct LeaveOneOutTaus {
  Eigen::MatrixXd rows;  // n x p, row r = (n-1)^{-1} sum_{s != r} h(X_r, X_s)
  TauVector tau;         // exact average of the kernel over all pairs
  int d = 0;

  Index n() const { return rows.rows(); }
  Index p() const { return rows.cols(); }
};

// +1 for concordant, -1 for discordant pairs; TieError if x and y agree in a coordinate.
Eigen::VectorXd kendall_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Throws TieError naming the first column with repeated values.
void check_no_ties(const Dataset& data);

// Adds uniform noise of magnitude 1e-9 times the column range to columns with
// ties. Returns the number of perturbed columns.
int jitter_ties(Dataset& data, std::uint64_t seed);

TauVector kendall_tau_vector(const Dataset& data);
LeaveOneOutTaus leave_one_out(const Dataset& data);

Eigen::VectorXd column_means(const TauVector& tau);
double grand_mean(const TauVector& tau);

// d x d matrix with unit diagonal from a Kendall vector.
Eigen::MatrixXd tau_matrix(const TauVector& tau);

}  // namespace kstruct
