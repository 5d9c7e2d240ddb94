// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/kendall.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "kstruct/errors.hpp"
#include "kstruct/indexing.hpp"

namespace kstruct {

namespace {

int first_tied_column(const Dataset& data) {
  std::vector<double> column(data.n());
  for (int c = 0; c < data.d(); ++c) {
    for (Index r = 0; r < data.n(); ++r) column[r] = data.values(r, c);
    std::sort(column.begin(), column.end());
    if (std::adjacent_find(column.begin(), column.end()) != column.end()) return c;
  }
  return -1;
}

}  // namespace

Eigen::VectorXd kendall_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("kernel arguments must be vectors of equal length >= 2");
  }
  const int d = static_cast<int>(x.size());
  std::vector<int> sign(d);
  for (int c = 0; c < d; ++c) {
    double diff = x(c) - y(c);
    if (diff == 0.0) {
      throw TieError(c + 1, "tie in coordinate " + std::to_string(c + 1));
    }
    sign[c] = diff > 0 ? 1 : -1;
  }
  PairTable table(d);
  Eigen::VectorXd h(table.p());
  for (Index k = 0; k < table.p(); ++k) h(k) = sign[table.first(k)] * sign[table.second(k)];
  return h;
}

void check_no_ties(const Dataset& data) {
  int c = first_tied_column(data);
  if (c >= 0) {
    throw TieError(c + 1, "column " + std::to_string(c + 1) +
                              " contains tied values; enable tie jitter to break them");
  }
}

int jitter_ties(Dataset& data, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x7469ULL});
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int touched = 0;
  std::vector<double> column(data.n());
  for (int c = 0; c < data.d(); ++c) {
    for (Index r = 0; r < data.n(); ++r) column[r] = data.values(r, c);
    std::sort(column.begin(), column.end());
    if (std::adjacent_find(column.begin(), column.end()) == column.end()) continue;
    double range = column.back() - column.front();
    double scale = 1e-9 * (range > 0 ? range : 1.0);
    for (Index r = 0; r < data.n(); ++r) data.values(r, c) += scale * unif(rng);
    ++touched;
  }
  return touched;
}

LeaveOneOutTaus leave_one_out(const Dataset& data) {
  const Index n = data.n();
  const int d = data.d();
  if (n < 2) throw InvalidArgument("at least two observations are required");
  if (d < 2) throw InvalidArgument("at least two variables are required");
  if (!data.values.allFinite()) throw InvalidArgument("data contain non-finite values");
  check_no_ties(data);

  PairTable table(d);
  const Index p = table.p();
  // sums(r, k) = sum_{s != r} h_k(X_r, X_s), an integer held exactly in a double.
  Eigen::MatrixXd sums(n, p);
  parallel_for(n, [&](Index r) {
    Eigen::MatrixXd signs = (data.values.rowwise() - data.values.row(r)).array().sign().matrix();
    Eigen::MatrixXd gram = signs.transpose() * signs;
    for (Index k = 0; k < p; ++k) sums(r, k) = gram(table.first(k), table.second(k));
  });

  LeaveOneOutTaus out;
  out.d = d;
  // Totals are exact integers, so one division gives the correctly rounded tau.
  Eigen::VectorXd totals = sums.colwise().sum().transpose();
  out.tau = totals / (static_cast<double>(n) * static_cast<double>(n - 1));
  out.rows = sums / static_cast<double>(n - 1);
  return out;
}

TauVector kendall_tau_vector(const Dataset& data) { return leave_one_out(data).tau; }

Eigen::VectorXd column_means(const TauVector& tau) {
  const int d = dimension_of_pairs(tau.size());
  PairTable table(d);
  Eigen::VectorXd means = Eigen::VectorXd::Zero(d);
  for (Index k = 0; k < table.p(); ++k) {
    means(table.first(k)) += tau(k);
    means(table.second(k)) += tau(k);
  }
  return means / static_cast<double>(d - 1);
}

double grand_mean(const TauVector& tau) {
  if (tau.size() == 0) throw InvalidArgument("empty Kendall vector");
  return tau.mean();
}

Eigen::MatrixXd tau_matrix(const TauVector& tau) {
  const int d = dimension_of_pairs(tau.size());
  PairTable table(d);
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(d, d);
  for (Index k = 0; k < table.p(); ++k) {
    T(table.first(k), table.second(k)) = tau(k);
    T(table.second(k), table.first(k)) = tau(k);
  }
  return T;
}

}  // namespace kstruct
