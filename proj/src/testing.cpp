// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/testing.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "kstruct/errors.hpp"

namespace kstruct {

std::string to_string(Statistic s) { return s == Statistic::Euclidean ? "euclidean" : "max"; }

std::string to_string(Weighting w) {
  return w == Weighting::IdentityOverN ? "identity" : "sigma";
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::Jackknife:
      return "jackknife";
    case Estimator::StructuredJackknifeExchangeable:
      return "structured-exchangeable";
    case Estimator::StructuredJackknifePartition:
      return "structured-partition";
  }
  return "unknown";
}

namespace {

constexpr Index kReplicateBlock = 1024;

void require_replicates(Index N) {
  if (N < 100) throw InvalidArgument("Monte Carlo methods need at least 100 replicates");
}

// Runs fn(rng, begin, end) over fixed replicate blocks and sums the counts.
template <typename Fn>
Index count_over_blocks(Index N, std::uint64_t seed, Fn fn) {
  const Index blocks = (N + kReplicateBlock - 1) / kReplicateBlock;
  std::vector<Index> counts(blocks, 0);
  parallel_for(blocks, [&](Index b) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(b)});
    const Index begin = b * kReplicateBlock;
    const Index end = std::min(N, begin + kReplicateBlock);
    counts[b] = fn(rng, begin, end);
  });
  Index total = 0;
  for (Index c : counts) total += c;
  return total;
}

}  // namespace

std::vector<SpectrumTerm> group_spectrum(const Eigen::VectorXd& values) {
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end(), std::greater<double>());
  std::vector<SpectrumTerm> out;
  if (v.empty() || !(v.front() > 0)) return out;
  const double floor = 1e-10 * v.front();
  for (double x : v) {
    if (x < floor) break;
    if (!out.empty() && std::abs(out.back().lambda - x) <= 1e-8 * std::abs(out.back().lambda)) {
      // Running mean keeps the representative centred within the cluster.
      SpectrumTerm& t = out.back();
      t.lambda = (t.lambda * t.multiplicity + x) / (t.multiplicity + 1);
      ++t.multiplicity;
    } else {
      out.push_back({x, 1});
    }
  }
  return out;
}

Weight Weight::identity_over_n(Index n, Index p) {
  if (n < 1) throw InvalidArgument("sample size must be positive");
  Weight w;
  w.kind_ = Kind::ScaledIdentity;
  w.n_ = static_cast<double>(n);
  w.p_ = p;
  return w;
}

Weight Weight::structured(const SBlock& A) {
  SBlockEigenvalues ev = eigenvalues(A);
  const double vals[3] = {ev.delta1, ev.delta2, ev.delta3};
  const Index mult[3] = {ev.mult1, ev.mult2, ev.mult3};
  double top = 0.0, low = INFINITY;
  for (int r = 0; r < 3; ++r) {
    if (mult[r] == 0) continue;
    top = std::max(top, vals[r]);
    low = std::min(low, vals[r]);
  }
  if (!(top > 0)) throw SingularError("weighting matrix has zero rank");
  Weight w;
  w.kind_ = Kind::Structured;
  w.sblock_ = A;
  w.p_ = A.p();
  if (low < -1e-10 * top) {
    w.warnings_.push_back("structured covariance has a negative eigenvalue (" + std::to_string(low) +
                          "); treated as zero");
  }
  if (low <= 1e-10 * top) {
    w.warnings_.push_back("structured covariance is singular; Moore-Penrose inverse used");
  }
  return w;
}

Weight Weight::dense(const Eigen::MatrixXd& A) {
  RepairedCovariance rep = pd_repair(0.5 * (A + A.transpose()));
  if (rep.rank() == 0) throw SingularError("weighting matrix has zero rank");
  Weight w;
  w.kind_ = Kind::Dense;
  w.p_ = A.rows();
  w.inverse_ = rep.pseudo_inverse();
  w.inverse_sqrt_ = rep.pseudo_inverse_sqrt();
  if (rep.significant_negative) {
    w.warnings_.push_back("covariance estimate was indefinite (min eigenvalue " +
                          std::to_string(rep.min_original_eigenvalue) + "); negative eigenvalues clipped");
  }
  if (rep.rank() < w.p_) {
    w.warnings_.push_back("covariance estimate has rank " + std::to_string(rep.rank()) + " < p=" +
                          std::to_string(w.p_) + "; Moore-Penrose inverse used");
  }
  return w;
}

Weight Weight::from_estimate(const CovarianceEstimate& A) {
  if (A.kind == CovarianceKind::ExchangeableStructured) return structured(A.structured);
  return dense(A.dense);
}

double Weight::quadratic(const Eigen::VectorXd& r) const {
  if (r.size() != p_) throw InvalidArgument("residual length does not match the weighting");
  switch (kind_) {
    case Kind::ScaledIdentity:
      return n_ * r.squaredNorm();
    case Kind::Structured:
      return pseudo_quadratic(sblock_, r);
    case Kind::Dense:
      return r.dot(inverse_ * r);
  }
  return 0.0;
}

Eigen::VectorXd Weight::whiten(const Eigen::VectorXd& r) const {
  if (r.size() != p_) throw InvalidArgument("residual length does not match the weighting");
  switch (kind_) {
    case Kind::ScaledIdentity:
      return std::sqrt(n_) * r;
    case Kind::Structured:
      return apply_pseudo_power(sblock_, r, -0.5);
    case Kind::Dense:
      return inverse_sqrt_ * r;
  }
  return r;
}

Eigen::MatrixXd Weight::whitening_matrix() const {
  switch (kind_) {
    case Kind::ScaledIdentity:
      return std::sqrt(n_) * Eigen::MatrixXd::Identity(p_, p_);
    case Kind::Dense:
      return inverse_sqrt_;
    case Kind::Structured: {
      Eigen::MatrixXd out(p_, p_);
      for (Index c = 0; c < p_; ++c) out.col(c) = whiten(Eigen::VectorXd::Unit(p_, c));
      return out;
    }
  }
  return {};
}

double statistic_euclidean(const TauVector& tau, const TauVector& theta, const Weight& weight) {
  return weight.quadratic(tau - theta);
}

double statistic_max(const TauVector& tau, const TauVector& theta, const Weight& weight) {
  return weight.whiten(tau - theta).cwiseAbs().maxCoeff();
}

double pvalue_chisq(double E, Index p, Index L) {
  if (p <= L) throw InvalidArgument("chi-square reference needs p > L");
  if (E <= 0) return 1.0;
  boost::math::chi_squared_distribution<double> dist(static_cast<double>(p - L));
  return boost::math::cdf(boost::math::complement(dist, E));
}

double mc_pvalue(Index exceed, Index N, bool conservative) {
  if (conservative) return (1.0 + exceed) / (1.0 + N);
  return static_cast<double>(exceed) / static_cast<double>(N);
}

double pvalue_mixture_mc(double E, const std::vector<SpectrumTerm>& spectrum, Index N,
                         std::uint64_t seed, bool conservative) {
  if (spectrum.empty()) throw InvalidArgument("mixture spectrum is empty");
  for (const auto& t : spectrum) {
    if (!(t.lambda > 0) || t.multiplicity < 1) {
      throw InvalidArgument("mixture terms need positive weights and multiplicities");
    }
  }
  require_replicates(N);
  Index exceed = count_over_blocks(N, seed, [&](Rng& rng, Index begin, Index end) {
    std::vector<std::chi_squared_distribution<double>> chi;
    for (const auto& t : spectrum) chi.emplace_back(static_cast<double>(t.multiplicity));
    Index count = 0;
    for (Index l = begin; l < end; ++l) {
      double value = 0.0;
      for (std::size_t t = 0; t < spectrum.size(); ++t) value += spectrum[t].lambda * chi[t](rng);
      count += value > E;
    }
    return count;
  });
  return mc_pvalue(exceed, N, conservative);
}

std::vector<SpectrumTerm> exchangeable_spectrum(const SBlock& S) {
  SBlockEigenvalues ev = eigenvalues(S);
  Eigen::VectorXd values(ev.mult2 + ev.mult3);
  values.head(ev.mult2).setConstant(ev.delta2);
  values.tail(ev.mult3).setConstant(ev.delta3);
  return group_spectrum(values);
}

NullSampler NullSampler::dense(const Eigen::MatrixXd& cov) {
  RepairedCovariance rep = pd_repair(0.5 * (cov + cov.transpose()));
  NullSampler s;
  s.kind_ = Kind::Dense;
  s.p_ = cov.rows();
  s.factor_ = rep.sqrt();
  s.method_ = "dense factor";
  return s;
}

NullSampler NullSampler::projector(const ProjectionOperator& P) {
  NullSampler s;
  s.kind_ = Kind::Projector;
  s.p_ = P.p();
  s.projector_ = P;
  s.method_ = "projector complement";
  return s;
}

namespace {

double checked_root(double delta, double scale, const char* what) {
  if (delta < -1e-10 * std::max(scale, 0.0)) {
    throw NotPositiveDefinite(delta, std::string("negative eigenvalue in ") + what);
  }
  return std::sqrt(std::max(delta, 0.0));
}

}  // namespace

NullSampler NullSampler::projection_construction(const SBlock& S) {
  SBlockEigenvalues ev = eigenvalues(S);
  const double scale = std::max({std::abs(ev.delta1), std::abs(ev.delta2), std::abs(ev.delta3)});
  NullSampler s;
  s.kind_ = Kind::Spectral;
  s.p_ = S.p();
  s.d_ = S.d;
  s.scale_[0] = 0.0;
  s.scale_[1] = ev.mult2 ? checked_root(ev.delta2, scale, "between direction") : 0.0;
  s.scale_[2] = ev.mult3 ? checked_root(ev.delta3, scale, "within direction") : 0.0;
  s.method_ = "structured projection";
  return s;
}

NullSampler NullSampler::additive(const SBlock& target) {
  const double a0 = target.s0, a1 = target.s1, a2 = target.s2;
  const double pair_var = a2 - 2 * a1 + a0;
  NullSampler s;
  s.p_ = target.p();
  s.d_ = target.d;
  if (a1 >= a0 && a0 >= 0 && pair_var >= 0) {
    s.kind_ = Kind::Additive;
    s.scale_[0] = std::sqrt(a0);
    s.scale_[1] = std::sqrt(a1 - a0);
    s.scale_[2] = std::sqrt(pair_var);
    s.method_ = "structured additive";
    return s;
  }
  SBlockEigenvalues ev = eigenvalues(target);
  const double scale = std::max({std::abs(ev.delta1), std::abs(ev.delta2), std::abs(ev.delta3)});
  s.kind_ = Kind::Spectral;
  s.fallback_ = true;
  s.scale_[0] = checked_root(ev.delta1, scale, "mean direction");
  s.scale_[1] = ev.mult2 ? checked_root(ev.delta2, scale, "between direction") : 0.0;
  s.scale_[2] = ev.mult3 ? checked_root(ev.delta3, scale, "within direction") : 0.0;
  s.method_ = "structured spectral (additive preconditions failed)";
  return s;
}

void NullSampler::draw(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const {
  std::normal_distribution<double> normal;
  switch (kind_) {
    case Kind::Dense: {
      Eigen::VectorXd z(p_);
      for (Index i = 0; i < p_; ++i) z(i) = normal(rng);
      out = factor_ * z;
      return;
    }
    case Kind::Projector: {
      Eigen::VectorXd z(p_);
      for (Index i = 0; i < p_; ++i) z(i) = normal(rng);
      out = projector_->residual(z);
      return;
    }
    case Kind::Additive: {
      const double shared = scale_[0] * normal(rng);
      Eigen::VectorXd per_variable(d_);
      for (int v = 0; v < d_; ++v) per_variable(v) = scale_[1] * normal(rng);
      PairTable t(d_);
      for (Index k = 0; k < p_; ++k) {
        out(k) = shared + per_variable(t.first(k)) + per_variable(t.second(k)) + scale_[2] * normal(rng);
      }
      return;
    }
    case Kind::Spectral: {
      Eigen::VectorXd z(p_);
      for (Index i = 0; i < p_; ++i) z(i) = normal(rng);
      SpectralParts parts = spectral_parts(z, d_);
      out = scale_[0] * parts.mean + scale_[1] * parts.between + scale_[2] * parts.within;
      return;
    }
  }
}

Eigen::MatrixXd NullSampler::draw_many(Index N, std::uint64_t seed) const {
  Eigen::MatrixXd out(p_, N);
  const Index blocks = (N + kReplicateBlock - 1) / kReplicateBlock;
  parallel_for(blocks, [&](Index b) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(b)});
    const Index begin = b * kReplicateBlock;
    const Index end = std::min(N, begin + kReplicateBlock);
    for (Index l = begin; l < end; ++l) draw(rng, out.col(l));
  });
  return out;
}

double pvalue_max_mc(double M, const NullSampler& sampler, Index N, std::uint64_t seed,
                     bool conservative) {
  require_replicates(N);
  Index exceed = count_over_blocks(N, seed, [&](Rng& rng, Index begin, Index end) {
    Eigen::VectorXd z(sampler.p());
    Index count = 0;
    for (Index l = begin; l < end; ++l) {
      sampler.draw(rng, z);
      count += z.cwiseAbs().maxCoeff() > M;
    }
    return count;
  });
  return mc_pvalue(exceed, N, conservative);
}

Eigen::MatrixXd multiplier_bootstrap_replicates(const LeaveOneOutTaus& loo, const ProjectionOperator& P,
                                                Index N, std::uint64_t seed) {
  const Index n = loo.n();
  if (n < 3) throw InvalidArgument("the multiplier bootstrap needs n >= 3");
  if (P.p() != loo.p()) throw InvalidArgument("projector size does not match the data");
  // Rows of `centered` are (I - P)(tau^(r) - tau), scaled by 2 / sqrt(n).
  Eigen::MatrixXd centered = loo.rows.rowwise() - loo.tau.transpose();
  Eigen::MatrixXd projected = (centered.transpose() - P.apply_columns(centered.transpose()))
                              * (2.0 / std::sqrt(static_cast<double>(n)));
  Eigen::MatrixXd out(loo.p(), N);
  const Index blocks = (N + kReplicateBlock - 1) / kReplicateBlock;
  parallel_for(blocks, [&](Index b) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(b)});
    std::normal_distribution<double> normal;
    const Index begin = b * kReplicateBlock;
    const Index width = std::min(N, begin + kReplicateBlock) - begin;
    Eigen::MatrixXd weights(n, width);
    for (Index c = 0; c < width; ++c)
      for (Index r = 0; r < n; ++r) weights(r, c) = normal(rng);
    out.middleCols(begin, width) = projected * weights;
  });
  return out;
}

Eigen::MatrixXd multiplier_bootstrap_replicates(const Dataset& data, const DesignMatrix& B, Index N,
                                                std::uint64_t seed) {
  return multiplier_bootstrap_replicates(leave_one_out(data), gamma_projection(B), N, seed);
}

namespace {

std::string hypothesis_label(const Hypothesis& h) {
  if (!h.label.empty()) return h.label;
  if (h.is_partition()) {
    const auto& P = std::get<Partition>(h.value);
    return P.num_groups() == 1 ? "exchangeable" : "partition";
  }
  return "design";
}

Eigen::MatrixXd residual_covariance(const ProjectionOperator& P, const Eigen::MatrixXd& cov) {
  const Index p = P.p();
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(p, p) - P.matrix();
  Eigen::MatrixXd out = R * cov * R.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

TestReport run_test(const LeaveOneOutTaus& loo, const Hypothesis& hypothesis, const TestOptions& options) {
  const Index n = loo.n();
  const int d = loo.d;
  const Index p = loo.p();

  TestReport report;
  report.statistic = to_string(options.statistic);
  report.weighting = to_string(options.weighting);
  report.estimator = to_string(options.estimator);
  report.hypothesis = hypothesis_label(hypothesis);
  report.seed = options.seed;
  report.conservative = options.conservative;
  report.n = n;
  report.d = d;
  report.p = p;
  report.tau = loo.tau;

  DesignMatrix B;
  std::optional<Partition> partition;
  if (hypothesis.is_partition()) {
    partition = std::get<Partition>(hypothesis.value);
    if (partition->d() != d) throw InvalidArgument("partition dimension does not match the data");
    if (options.estimator == Estimator::Jackknife) {
      throw InvalidArgument("partial exchangeability hypotheses require a structured estimator");
    }
    if (options.estimator == Estimator::StructuredJackknifeExchangeable && partition->num_groups() != 1) {
      throw InvalidArgument("the exchangeable estimator requires a single-group partition");
    }
    B = block_membership_matrix(*partition);
  } else {
    B = std::get<DesignMatrix>(hypothesis.value);
    if (B.p() != p) throw InvalidArgument("design matrix rows do not match the number of pairs");
    if (options.estimator != Estimator::Jackknife) {
      throw InvalidArgument("structured estimators require a partition hypothesis");
    }
  }
  report.L = B.L();
  report.beta_labels = B.column_labels;

  const ProjectionOperator orthogonal = gamma_projection(B);
  const Eigen::VectorXd r0 = orthogonal.residual(loo.tau);
  if (r0.norm() <= 1e-12 * std::sqrt(static_cast<double>(p))) {
    // tau already satisfies the constraint, so every projector onto span(B) fixes it.
    report.theta = loo.tau;
    report.beta = orthogonal.coefficients(loo.tau);
    report.value = 0.0;
    report.p_value = 1.0;
    report.method = "zero residual";
    return report;
  }

  CovarianceEstimate sigma;
  switch (options.estimator) {
    case Estimator::Jackknife:
      sigma = jackknife_cov(loo);
      break;
    case Estimator::StructuredJackknifeExchangeable:
      sigma = structured_jackknife_exchangeable(loo);
      break;
    case Estimator::StructuredJackknifePartition:
      sigma = structured_jackknife_partition(loo, *partition);
      break;
  }

  const bool use_sigma = options.weighting == Weighting::EstimatedCovariance;
  const ProjectionOperator proj = use_sigma ? gamma_projection(B, sigma) : orthogonal;
  report.theta = proj.apply(loo.tau);
  report.beta = orthogonal.coefficients(loo.tau);
  const Eigen::VectorXd residual = loo.tau - report.theta;

  const Weight weight = use_sigma ? Weight::from_estimate(sigma) : Weight::identity_over_n(n, p);
  for (const auto& w : weight.warnings()) report.warnings.push_back(w);
  if (use_sigma && options.estimator == Estimator::Jackknife) {
    report.warnings.push_back(
        "level distortion: estimated-covariance weighting with the unstructured jackknife is known "
        "not to hold the nominal level");
  }
  if (use_sigma && sigma.kind == CovarianceKind::PartitionStructured &&
      proj.kind() != ProjectionKind::GeneralGamma) {
    // The covariance-free projector is exact for partition-invariant weights;
    // confirm on this instance.
    try {
      Eigen::VectorXd general = gamma_projection(B, pd_repair(sigma.dense)).apply(loo.tau);
      double gap = (general - report.theta).norm();
      if (gap > 1e-9 * std::max(loo.tau.norm(), 1.0)) {
        report.warnings.push_back("weighted projection differs from B B^+ by " + std::to_string(gap));
      }
    } catch (const SingularError&) {
      report.warnings.push_back("weighted projection check skipped: B' A^+ B is singular");
    }
  }

  report.value = options.statistic == Statistic::Euclidean ? weight.quadratic(residual)
                                                           : weight.whiten(residual).cwiseAbs().maxCoeff();

  const Index N = options.replicates;
  const bool single_group = partition && partition->num_groups() == 1 &&
                            sigma.kind == CovarianceKind::ExchangeableStructured;
  const CovarianceEstimate n_sigma = sigma.scaled(static_cast<double>(n));

  if (options.bootstrap) {
    if (use_sigma) throw InvalidArgument("the multiplier bootstrap applies to the identity weighting only");
    if (options.estimator != Estimator::Jackknife) {
      throw InvalidArgument("the multiplier bootstrap is paired with the jackknife estimator");
    }
    require_replicates(N);
    Eigen::MatrixXd draws = multiplier_bootstrap_replicates(loo, orthogonal, N, options.seed);
    Index exceed = 0;
    for (Index l = 0; l < N; ++l) {
      double v = options.statistic == Statistic::Euclidean ? draws.col(l).squaredNorm()
                                                           : draws.col(l).cwiseAbs().maxCoeff();
      exceed += v > report.value;
    }
    report.p_value = mc_pvalue(exceed, N, options.conservative);
    report.replicates = N;
    report.method = "multiplier bootstrap";
    return report;
  }

  if (options.statistic == Statistic::Euclidean) {
    if (use_sigma) {
      report.p_value = pvalue_chisq(report.value, p, B.L());
      report.method = "chi-square, " + std::to_string(p - B.L()) + " df";
      return report;
    }
    if (single_group) {
      report.eigenvalues = exchangeable_spectrum(n_sigma.structured);
      report.method = "chi-square mixture, closed-form spectrum";
    } else {
      Eigen::MatrixXd target = residual_covariance(orthogonal, n_sigma.to_dense());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(target, Eigen::EigenvaluesOnly);
      report.eigenvalues = group_spectrum(eig.eigenvalues());
      report.method = "chi-square mixture, eigendecomposition";
    }
    if (report.eigenvalues.empty()) throw SingularError("null distribution of the statistic is degenerate");
    report.p_value = pvalue_mixture_mc(report.value, report.eigenvalues, N, options.seed, options.conservative);
    report.replicates = N;
    return report;
  }

  std::optional<NullSampler> sampler;
  if (use_sigma) {
    if (proj.kind() != ProjectionKind::GeneralGamma) {
      sampler = NullSampler::projector(orthogonal);
      report.method = "sup-norm Monte Carlo, I - BB+ law";
    } else {
      Eigen::MatrixXd W = weight.whitening_matrix();
      Eigen::MatrixXd target = W * residual_covariance(proj, sigma.to_dense()) * W.transpose();
      sampler = NullSampler::dense(target);
      report.method = "sup-norm Monte Carlo, whitened residual law";
    }
  } else if (single_group) {
    sampler = NullSampler::projection_construction(n_sigma.structured);
    report.method = "sup-norm Monte Carlo, structured projection sampler";
  } else {
    sampler = NullSampler::dense(residual_covariance(orthogonal, n_sigma.to_dense()));
    report.method = "sup-norm Monte Carlo, dense Gaussian";
  }
  report.p_value = pvalue_max_mc(report.value, *sampler, N, options.seed, options.conservative);
  report.replicates = N;
  return report;
}

TestReport run_test(const Dataset& data, const Hypothesis& hypothesis, const TestOptions& options) {
  return run_test(leave_one_out(data), hypothesis, options);
}

}  // namespace kstruct
