// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/covariance.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "kstruct/errors.hpp"

namespace kstruct {

Index CovarianceEstimate::p() const {
  return kind == CovarianceKind::ExchangeableStructured ? structured.p() : dense.rows();
}

Eigen::MatrixXd CovarianceEstimate::to_dense(int max_d) const {
  if (kind == CovarianceKind::ExchangeableStructured) return materialize(structured, max_d);
  return dense;
}

CovarianceEstimate CovarianceEstimate::scaled(double factor) const {
  CovarianceEstimate out = *this;
  if (kind == CovarianceKind::ExchangeableStructured) {
    out.structured.s0 *= factor;
    out.structured.s1 *= factor;
    out.structured.s2 *= factor;
  } else {
    out.dense *= factor;
  }
  return out;
}

namespace {

Eigen::MatrixXd centered_rows(const LeaveOneOutTaus& loo) {
  return loo.rows.rowwise() - loo.tau.transpose();
}

void require_rows(const LeaveOneOutTaus& loo, Index min_n, const char* who) {
  if (loo.n() < min_n) {
    throw InvalidArgument(std::string(who) + " needs at least " + std::to_string(min_n) +
                          " observations, got " + std::to_string(loo.n()));
  }
}

}  // namespace

CovarianceEstimate jackknife_cov(const LeaveOneOutTaus& loo) {
  require_rows(loo, 2, "jackknife covariance");
  const double n = static_cast<double>(loo.n());
  Eigen::MatrixXd centered = centered_rows(loo);
  CovarianceEstimate out;
  out.kind = CovarianceKind::Dense;
  out.dense = (4.0 / (n * n)) * (centered.transpose() * centered);
  out.dense = 0.5 * (out.dense + out.dense.transpose()).eval();
  return out;
}

CovarianceEstimate jackknife_cov(const Dataset& data) { return jackknife_cov(leave_one_out(data)); }

CovarianceEstimate structured_jackknife_exchangeable(const LeaveOneOutTaus& loo) {
  require_rows(loo, 3, "structured jackknife");
  const int d = loo.d;
  if (d < 4) throw InvalidArgument("the exchangeable structured jackknife needs d >= 4");
  const double n = static_cast<double>(loo.n());
  const double p = static_cast<double>(loo.p());
  PairTable table(d);

  double diag_sum = 0.0;
  double grand_sum = 0.0;
  double column_sum = 0.0;
  Eigen::VectorXd colacc(d);
  for (Index r = 0; r < loo.n(); ++r) {
    colacc.setZero();
    double total = 0.0;
    double squares = 0.0;
    for (Index k = 0; k < table.p(); ++k) {
      double v = loo.rows(r, k) - loo.tau(k);
      squares += v * v;
      total += v;
      colacc(table.first(k)) += v;
      colacc(table.second(k)) += v;
    }
    diag_sum += squares;
    grand_sum += (total / p) * (total / p);
    column_sum += (colacc / (d - 1.0)).squaredNorm();
  }
  const double s2 = 4.0 / (p * n * n) * diag_sum;
  const double eta0 = 4.0 / (n * n) * grand_sum;
  const double eta1 = 4.0 / (d * n * n) * column_sum;
  const double s1 = ((d - 1.0) * eta1 - s2) / (d - 2.0);
  const double s0 = (p * eta0 - 2.0 * (d - 1.0) * eta1 + s2) / (p - 2.0 * d + 3.0);

  CovarianceEstimate out;
  out.kind = CovarianceKind::ExchangeableStructured;
  out.structured = SBlock{s0, s1, s2, d};
  out.partition = Partition::single_group(d);
  return out;
}

CovarianceEstimate structured_jackknife_exchangeable(const Dataset& data) {
  return structured_jackknife_exchangeable(leave_one_out(data));
}

std::vector<int> partition_entry_classes(const Partition& partition, int* num_classes) {
  PairTable t(partition.d());
  const Index p = t.p();
  const std::int64_t radix = 2 * static_cast<std::int64_t>(partition.num_groups());
  std::vector<int> ids(static_cast<std::size_t>(p * p));
  std::unordered_map<std::int64_t, int> seen;
  // Signature: for each of the two pairs, the sorted (group label, shared
  // with the other pair) tags of its endpoints.
  auto tags = [&](Index k, Index l, std::int64_t& lo, std::int64_t& hi) {
    int a = t.first(k), b = t.second(k);
    int c = t.first(l), e = t.second(l);
    std::int64_t ta = 2 * partition.label(a) + (a == c || a == e);
    std::int64_t tb = 2 * partition.label(b) + (b == c || b == e);
    lo = std::min(ta, tb);
    hi = std::max(ta, tb);
  };
  for (Index k = 0; k < p; ++k) {
    for (Index l = 0; l < p; ++l) {
      std::int64_t klo, khi, llo, lhi;
      tags(k, l, klo, khi);
      tags(l, k, llo, lhi);
      std::int64_t key = ((klo * radix + khi) * radix + llo) * radix + lhi;
      auto [it, inserted] = seen.emplace(key, static_cast<int>(seen.size()));
      ids[static_cast<std::size_t>(k * p + l)] = it->second;
    }
  }
  if (num_classes) *num_classes = static_cast<int>(seen.size());
  return ids;
}

Eigen::MatrixXd class_average(const Eigen::MatrixXd& matrix, const Partition& partition) {
  const Index p = num_pairs(partition.d());
  if (matrix.rows() != p || matrix.cols() != p) {
    throw InvalidArgument("matrix size does not match the partition dimension");
  }
  int classes = 0;
  std::vector<int> ids = partition_entry_classes(partition, &classes);
  std::vector<double> sum(classes, 0.0);
  std::vector<Index> count(classes, 0);
  for (Index k = 0; k < p; ++k) {
    for (Index l = 0; l < p; ++l) {
      int c = ids[static_cast<std::size_t>(k * p + l)];
      sum[c] += matrix(k, l);
      ++count[c];
    }
  }
  Eigen::MatrixXd out(p, p);
  for (Index k = 0; k < p; ++k) {
    for (Index l = 0; l < p; ++l) {
      int c = ids[static_cast<std::size_t>(k * p + l)];
      out(k, l) = sum[c] / static_cast<double>(count[c]);
    }
  }
  return out;
}

CovarianceEstimate structured_jackknife_partition(const LeaveOneOutTaus& loo,
                                                  const Partition& partition) {
  require_rows(loo, 3, "partition-structured jackknife");
  if (partition.d() != loo.d) throw InvalidArgument("partition dimension does not match the data");
  CovarianceEstimate out;
  out.kind = CovarianceKind::PartitionStructured;
  out.dense = class_average(jackknife_cov(loo).dense, partition);
  out.partition = partition;
  return out;
}

CovarianceEstimate structured_jackknife_partition(const Dataset& data, const Partition& partition) {
  return structured_jackknife_partition(leave_one_out(data), partition);
}

double RepairedCovariance::threshold(double rel_tol) const {
  double top = eigenvalues.size() ? eigenvalues.maxCoeff() : 0.0;
  return rel_tol * std::max(top, 0.0);
}

Index RepairedCovariance::rank(double rel_tol) const {
  double tol = threshold(rel_tol);
  Index r = 0;
  for (Index i = 0; i < eigenvalues.size(); ++i) r += eigenvalues(i) > tol && eigenvalues(i) > 0;
  return r;
}

Eigen::MatrixXd RepairedCovariance::pseudo_inverse(double rel_tol) const {
  double tol = threshold(rel_tol);
  Eigen::VectorXd inv = eigenvalues.unaryExpr([tol](double x) { return x > tol && x > 0 ? 1.0 / x : 0.0; });
  return eigenvectors * inv.asDiagonal() * eigenvectors.transpose();
}

Eigen::MatrixXd RepairedCovariance::pseudo_inverse_sqrt(double rel_tol) const {
  double tol = threshold(rel_tol);
  Eigen::VectorXd inv = eigenvalues.unaryExpr(
      [tol](double x) { return x > tol && x > 0 ? 1.0 / std::sqrt(x) : 0.0; });
  return eigenvectors * inv.asDiagonal() * eigenvectors.transpose();
}

Eigen::MatrixXd RepairedCovariance::sqrt() const {
  Eigen::VectorXd root = eigenvalues.cwiseMax(0.0).cwiseSqrt();
  return eigenvectors * root.asDiagonal() * eigenvectors.transpose();
}

RepairedCovariance pd_repair(const Eigen::MatrixXd& symmetric) {
  if (symmetric.rows() != symmetric.cols()) throw InvalidArgument("matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetric);
  if (eig.info() != Eigen::Success) throw Error("symmetric eigendecomposition failed");
  RepairedCovariance out;
  out.eigenvectors = eig.eigenvectors();
  Eigen::VectorXd values = eig.eigenvalues();
  out.min_original_eigenvalue = values.size() ? values.minCoeff() : 0.0;
  const double top = values.size() ? std::max(values.maxCoeff(), 0.0) : 0.0;
  out.significant_negative = out.min_original_eigenvalue < -1e-10 * top;
  if (out.min_original_eigenvalue < 0) {
    out.eigenvalues = values.cwiseMax(0.0);
    out.matrix = out.eigenvectors * out.eigenvalues.asDiagonal() * out.eigenvectors.transpose();
  } else {
    out.eigenvalues = values;
    out.matrix = symmetric;
  }
  return out;
}

namespace {

// Per-replicate quantities: x(0) = mean concordance indicator over the six
// coordinate pairs; x(1+l) = product of concordance with two independent
// partners (pairs at overlap l); x(4+l) = product with a single partner.
constexpr int kMoments = 7;

struct MomentBlock {
  Eigen::Matrix<double, kMoments, 1> sum = Eigen::Matrix<double, kMoments, 1>::Zero();
  Eigen::Matrix<double, kMoments, kMoments> cross = Eigen::Matrix<double, kMoments, kMoments>::Zero();
  std::array<std::array<double, 6>, 3> theta{};
};

}  // namespace

PopulationSigma population_sigma_mc(const CopulaSampler& sampler, int d, Index mc_reps,
                                    std::uint64_t seed, Index n_finite) {
  if (mc_reps < 1000) throw InvalidArgument("population_sigma_mc needs at least 1000 replicates");
  if (d < 4) throw InvalidArgument("population_sigma_mc needs d >= 4");
  if (n_finite != 0 && n_finite < 2) throw InvalidArgument("finite sample size must be >= 2");

  constexpr Index kBlock = 4096;
  const Index blocks = (mc_reps + kBlock - 1) / kBlock;
  std::vector<MomentBlock> partial(blocks);

  // Coordinate pairs (a, b) for overlap counts 0, 1, 2.
  const int pairs[3][4] = {{0, 1, 2, 3}, {0, 1, 1, 2}, {0, 1, 0, 1}};

  parallel_for(blocks, [&](Index blk) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(blk)});
    Eigen::VectorXd x(d), v(d), w(d);
    MomentBlock& acc = partial[blk];
    const Index begin = blk * kBlock;
    const Index end = std::min(mc_reps, begin + kBlock);
    for (Index rep = begin; rep < end; ++rep) {
      sampler(rng, x);
      sampler(rng, v);
      sampler(rng, w);
      auto below = [&](const Eigen::VectorXd& z, int c) { return z(c) < x(c); };
      auto lt = [&](const Eigen::VectorXd& z, int i, int j) { return below(z, i) && below(z, j) ? 1.0 : 0.0; };
      auto gt = [&](const Eigen::VectorXd& z, int i, int j) { return !below(z, i) && !below(z, j) ? 1.0 : 0.0; };

      Eigen::Matrix<double, kMoments, 1> m;
      double conc = 0.0;
      for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) conc += lt(v, i, j) + gt(v, i, j);
      }
      m(0) = conc / 6.0;
      for (int l = 0; l < 3; ++l) {
        const int a0 = pairs[l][0], a1 = pairs[l][1], b0 = pairs[l][2], b1 = pairs[l][3];
        double lva = lt(v, a0, a1), gva = gt(v, a0, a1);
        double lwb = lt(w, b0, b1), gwb = gt(w, b0, b1);
        double lvb = lt(v, b0, b1), gvb = gt(v, b0, b1);
        acc.theta[l][0] += lva * lwb;
        acc.theta[l][1] += gva * lwb;
        acc.theta[l][2] += lva * gwb;
        acc.theta[l][3] += gva * gwb;
        // All coordinates of the union below x.
        double all_below = lva * lvb;
        acc.theta[l][4] += all_below;
        acc.theta[l][5] += (l == 0) ? lva * gvb : 0.0;
        m(1 + l) = (lva + gva) * (lwb + gwb);
        m(4 + l) = (lva + gva) * (lvb + gvb);
      }
      acc.sum += m;
      acc.cross += m * m.transpose();
    }
  });

  MomentBlock total;
  for (const auto& b : partial) {
    total.sum += b.sum;
    total.cross += b.cross;
    for (int l = 0; l < 3; ++l)
      for (int m = 0; m < 6; ++m) total.theta[l][m] += b.theta[l][m];
  }
  const double reps = static_cast<double>(mc_reps);
  Eigen::Matrix<double, kMoments, 1> mean = total.sum / reps;
  Eigen::Matrix<double, kMoments, kMoments> cov =
      (total.cross / reps - mean * mean.transpose()) * (reps / (reps - 1.0));

  PopulationSigma out;
  out.mc_reps = mc_reps;
  for (int l = 0; l < 3; ++l)
    for (int m = 0; m < 6; ++m) out.theta[l][m] = total.theta[l][m] / reps;

  const double conc = mean(0);
  out.beta = 2.0 * conc - 1.0;
  out.beta_se = 2.0 * std::sqrt(std::max(cov(0, 0), 0.0) / reps);

  auto se_of = [&](const Eigen::Matrix<double, kMoments, 1>& grad) {
    return std::sqrt(std::max(grad.dot(cov * grad), 0.0) / reps);
  };

  double limit[3];
  for (int l = 0; l < 3; ++l) {
    // 4 (beta + 1)^2 = 16 conc^2.
    limit[l] = 16.0 * mean(1 + l) - 16.0 * conc * conc;
    Eigen::Matrix<double, kMoments, 1> grad = Eigen::Matrix<double, kMoments, 1>::Zero();
    grad(0) = -32.0 * conc;
    grad(1 + l) = 16.0;
    out.limit_se[l] = se_of(grad);
  }
  out.limit = SBlock{limit[0], limit[1], limit[2], d};

  if (n_finite > 0) {
    const double n = static_cast<double>(n_finite);
    const double nn = n * (n - 1.0);
    double finite[3];
    for (int l = 0; l < 3; ++l) {
      finite[l] = 16.0 / nn * ((n - 2.0) * mean(1 + l) + 0.5 * mean(4 + l)) -
                  2.0 * (2.0 * n - 3.0) / nn * 4.0 * conc * conc;
      Eigen::Matrix<double, kMoments, 1> grad = Eigen::Matrix<double, kMoments, 1>::Zero();
      grad(0) = -16.0 * (2.0 * n - 3.0) / nn * conc;
      grad(1 + l) = 16.0 * (n - 2.0) / nn;
      grad(4 + l) = 8.0 / nn;
      out.finite_se[l] = se_of(grad);
    }
    out.finite = SBlock{finite[0], finite[1], finite[2], d};
    out.n_finite = n_finite;
  }
  return out;
}

}  // namespace kstruct
