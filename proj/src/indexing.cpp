// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/indexing.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "kstruct/errors.hpp"

namespace kstruct {

namespace {

Index choose2(Index m) { return m * (m - 1) / 2; }

}  // namespace

int dimension_of_pairs(Index p) {
  if (p < 1) throw InvalidArgument("pair count must be positive");
  Index d = static_cast<Index>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * p)) / 2.0));
  if (choose2(d) != p) {
    throw InvalidArgument(std::to_string(p) + " is not of the form d(d-1)/2");
  }
  return static_cast<int>(d);
}

PairIndex pair_of_index(Index k) {
  if (k < 1) throw InvalidArgument("pair index must be >= 1");
  // Smallest j with C(j,2) >= k.
  Index j = static_cast<Index>(std::ceil((1.0 + std::sqrt(1.0 + 8.0 * k)) / 2.0));
  while (j > 2 && choose2(j - 1) >= k) --j;
  while (choose2(j) < k) ++j;
  Index i = k - choose2(j - 1);
  return {k, static_cast<int>(i), static_cast<int>(j)};
}

Index index_of_pair(int i, int j) {
  if (i < 1 || i >= j) {
    throw InvalidArgument("index_of_pair needs 1 <= i < j, got (" + std::to_string(i) +
                          "," + std::to_string(j) + ")");
  }
  return i + choose2(j - 1);
}

std::vector<Index> column_index_set(int j, int d) {
  if (d < 2 || j < 1 || j > d) {
    throw InvalidArgument("column index " + std::to_string(j) + " out of range for d=" +
                          std::to_string(d));
  }
  std::vector<Index> out;
  out.reserve(d - 1);
  for (int r = 1; r < j; ++r) out.push_back(index_of_pair(r, j));
  for (int r = j + 1; r <= d; ++r) out.push_back(index_of_pair(j, r));
  std::sort(out.begin(), out.end());
  return out;
}

int overlap_count(Index k, Index l) {
  PairIndex a = pair_of_index(k);
  PairIndex b = pair_of_index(l);
  return (a.i == b.i || a.i == b.j) + (a.j == b.i || a.j == b.j);
}

PairTable::PairTable(int d) : d_(d) {
  if (d < 2) throw InvalidArgument("dimension must be at least 2");
  Index p = num_pairs(d);
  first_.resize(p);
  second_.resize(p);
  Index k = 0;
  for (int j = 1; j < d; ++j) {
    for (int i = 0; i < j; ++i) {
      first_[k] = i;
      second_[k] = j;
      ++k;
    }
  }
}

Partition::Partition(int d, std::vector<std::vector<int>> groups)
    : d_(d), groups_(std::move(groups)), labels_(d, -1) {
  if (d < 2) throw InvalidArgument("partition dimension must be at least 2");
  if (groups_.empty()) throw InvalidArgument("partition has no groups");
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    auto& group = groups_[g];
    if (group.empty()) throw InvalidArgument("partition group " + std::to_string(g + 1) + " is empty");
    std::sort(group.begin(), group.end());
    for (int v : group) {
      if (v < 1 || v > d) {
        throw InvalidArgument("variable " + std::to_string(v) + " outside 1.." + std::to_string(d));
      }
      if (labels_[v - 1] != -1) {
        throw InvalidArgument("variable " + std::to_string(v) + " appears in more than one group");
      }
      labels_[v - 1] = static_cast<int>(g);
    }
  }
  for (int v = 0; v < d; ++v) {
    if (labels_[v] == -1) {
      throw InvalidArgument("variable " + std::to_string(v + 1) + " is not covered by the partition");
    }
  }
}

Partition Partition::single_group(int d) {
  std::vector<int> all(d);
  for (int v = 0; v < d; ++v) all[v] = v + 1;
  return Partition(d, {all});
}

Partition Partition::singletons(int d) {
  std::vector<std::vector<int>> groups(d);
  for (int v = 0; v < d; ++v) groups[v] = {v + 1};
  return Partition(d, groups);
}

DesignMatrix make_design_matrix(const Eigen::MatrixXd& entries,
                                std::vector<std::string> column_labels) {
  const Index p = entries.rows();
  const Index L = entries.cols();
  dimension_of_pairs(p);
  if (L < 1) throw InvalidArgument("design matrix has no columns");
  if (L >= p) {
    throw InvalidArgument("design matrix needs fewer columns than rows (L=" + std::to_string(L) +
                          ", p=" + std::to_string(p) + ")");
  }
  if (!entries.allFinite()) throw InvalidArgument("design matrix has non-finite entries");

  DesignMatrix out;
  out.entries = entries;
  if (column_labels.empty()) {
    for (Index c = 0; c < L; ++c) column_labels.push_back("b" + std::to_string(c + 1));
  }
  if (static_cast<Index>(column_labels.size()) != L) {
    throw InvalidArgument("column label count does not match design matrix");
  }
  out.column_labels = std::move(column_labels);

  bool membership = true;
  std::vector<int> column_of_row(p, -1);
  for (Index k = 0; k < p && membership; ++k) {
    int ones = 0;
    for (Index c = 0; c < L; ++c) {
      double v = entries(k, c);
      if (v == 1.0) {
        ++ones;
        column_of_row[k] = static_cast<int>(c);
      } else if (v != 0.0) {
        membership = false;
        break;
      }
    }
    if (ones != 1) membership = false;
  }

  if (membership) {
    // Disjoint nonempty column supports give full column rank directly.
    std::vector<int> count(L, 0);
    for (int c : column_of_row) ++count[c];
    for (Index c = 0; c < L; ++c) {
      if (count[c] == 0) {
        throw RankDeficient("design column " + std::to_string(c + 1) + " is identically zero");
      }
    }
    out.is_block_membership = true;
    out.column_of_row = std::move(column_of_row);
    return out;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(entries);
  const auto& sv = svd.singularValues();
  double tol = 1e-10 * sv(0);
  Index rank = 0;
  for (Index c = 0; c < sv.size(); ++c) rank += sv(c) > tol;
  if (rank < L) {
    throw RankDeficient("design matrix has numerical rank " + std::to_string(rank) +
                        " but " + std::to_string(L) + " columns");
  }
  return out;
}

DesignMatrix ones_design(int d) {
  return make_design_matrix(Eigen::MatrixXd::Ones(num_pairs(d), 1), {"all"});
}

DesignMatrix block_membership_matrix(const Partition& partition) {
  const int d = partition.d();
  PairTable table(d);
  // Classes are ordered lexicographically by (r, s), r <= s, over group labels.
  std::map<std::pair<int, int>, int> class_of;
  for (Index k = 0; k < table.p(); ++k) {
    int a = partition.label(table.first(k));
    int b = partition.label(table.second(k));
    class_of.emplace(std::minmax(a, b), 0);
  }
  int c = 0;
  std::vector<std::string> labels;
  for (auto& [key, col] : class_of) {
    col = c++;
    labels.push_back("block(" + std::to_string(key.first + 1) + "," + std::to_string(key.second + 1) + ")");
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(table.p(), c);
  for (Index k = 0; k < table.p(); ++k) {
    int a = partition.label(table.first(k));
    int b = partition.label(table.second(k));
    B(k, class_of.at(std::minmax(a, b))) = 1.0;
  }
  if (c >= table.p()) {
    throw InvalidArgument("partition imposes no constraint (L = p = " + std::to_string(c) + ")");
  }
  return make_design_matrix(B, labels);
}

DesignMatrix diagonal_free_membership_matrix(const Partition& partition) {
  const int d = partition.d();
  PairTable table(d);
  std::map<std::pair<int, int>, int> between;
  for (Index k = 0; k < table.p(); ++k) {
    int a = partition.label(table.first(k));
    int b = partition.label(table.second(k));
    if (a != b) between.emplace(std::minmax(a, b), 0);
  }
  int c = 0;
  std::vector<std::string> labels;
  for (auto& [key, col] : between) {
    col = c++;
    labels.push_back("block(" + std::to_string(key.first + 1) + "," + std::to_string(key.second + 1) + ")");
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(table.p(), table.p());
  for (Index k = 0; k < table.p(); ++k) {
    int a = partition.label(table.first(k));
    int b = partition.label(table.second(k));
    if (a != b) {
      B(k, between.at(std::minmax(a, b))) = 1.0;
    } else {
      B(k, c) = 1.0;
      labels.push_back("pair(" + std::to_string(table.first(k) + 1) + "," +
                       std::to_string(table.second(k) + 1) + ")");
      ++c;
    }
  }
  if (c >= table.p()) {
    throw InvalidArgument("diagonal-free design imposes no constraint (L = p = " + std::to_string(c) + ")");
  }
  return make_design_matrix(B.leftCols(c), labels);
}

Eigen::MatrixXd pair_membership_matrix(int d) {
  PairTable table(d);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(table.p(), d);
  for (Index k = 0; k < table.p(); ++k) {
    B(k, table.first(k)) = 1.0;
    B(k, table.second(k)) = 1.0;
  }
  return B;
}

}  // namespace kstruct
