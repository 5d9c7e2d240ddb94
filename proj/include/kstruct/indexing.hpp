// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vectorization of the strict upper triangle of a d x d matrix, stacked
// column by column: (1,2), (1,3), (2,3), (1,4), ...  All public indices are
// 1-based. Hot loops use PairTable, which stores 0-based endpoints.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kstruct/runtime.hpp"

namespace kstruct {

struct PairIndex {
  Index k;
  int i;
  int j;
};

inline Index num_pairs(Index d) { return d * (d - 1) / 2; }

// Inverse of num_pairs; throws InvalidArgument if p is not a triangular number.
int dimension_of_pairs(Index p);

PairIndex pair_of_index(Index k);
Index index_of_pair(int i, int j);
std::vector<Index> column_index_set(int j, int d);
int overlap_count(Index k, Index l);

class PairTable {
 public:
  explicit PairTable(int d);
  int d() const { return d_; }
  Index p() const { return static_cast<Index>(first_.size()); }
  // 0-based endpoints of 0-based pair index k0.
  int first(Index k0) const { return first_[k0]; }
  int second(Index k0) const { return second_[k0]; }

 private:
  int d_;
  std::vector<int> first_;
  std::vector<int> second_;
};

class Partition {
 public:
  // groups hold 1-based variable indices; they must cover {1..d} disjointly.
  Partition(int d, std::vector<std::vector<int>> groups);
  static Partition single_group(int d);
  static Partition singletons(int d);

  int d() const { return d_; }
  int num_groups() const { return static_cast<int>(groups_.size()); }
  const std::vector<std::vector<int>>& groups() const { return groups_; }
  // 0-based group label of 0-based variable v.
  int label(int v) const { return labels_[v]; }
  bool operator==(const Partition& other) const { return groups_ == other.groups_; }

 private:
  int d_;
  std::vector<std::vector<int>> groups_;
  std::vector<int> labels_;
};

struct DesignMatrix {
  Eigen::MatrixXd entries;  // p x L
  bool is_block_membership = false;
  std::vector<int> column_of_row;  // 0-based column per row, membership only
  std::vector<std::string> column_labels;

  Index p() const { return entries.rows(); }
  Index L() const { return entries.cols(); }
  int d() const { return dimension_of_pairs(p()); }
};

// Validates shape (p triangular, L < p) and numerical rank, and detects the
// block-membership structure.
DesignMatrix make_design_matrix(const Eigen::MatrixXd& entries,
                                std::vector<std::string> column_labels = {});

DesignMatrix ones_design(int d);
DesignMatrix block_membership_matrix(const Partition& partition);
DesignMatrix diagonal_free_membership_matrix(const Partition& partition);

// Dense 0/1 matrix with entry (k, v) = 1 when variable v is an endpoint of k.
Eigen::MatrixXd pair_membership_matrix(int d);

}  // namespace kstruct
