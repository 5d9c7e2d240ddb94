// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/sblock.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kstruct/errors.hpp"
#include "kstruct/indexing.hpp"
#include "kstruct/kendall.hpp"

namespace kstruct {

namespace {

void check_length(const SBlock& S, const Eigen::VectorXd& v) {
  if (S.d < 2) throw InvalidArgument("structured matrix needs d >= 2");
  if (v.size() != S.p()) {
    throw InvalidArgument("vector length " + std::to_string(v.size()) + " does not match p=" +
                          std::to_string(S.p()));
  }
}

// Eigenvalue map delta = M s, rows ordered (delta1, delta2, delta3), columns (s0, s1, s2).
Eigen::Matrix3d eigen_map(int d) {
  const double dd = d;
  const double p = dd * (dd - 1) / 2;
  Eigen::Matrix3d M;
  M << p - 2 * dd + 3, 2 * (dd - 2), 1,
       -(dd - 3), dd - 4, 1,
       1, -2, 1;
  return M;
}

struct ActiveSpectrum {
  double delta[3];
  bool active[3];
  double max_abs;
};

ActiveSpectrum active_spectrum(const SBlock& S) {
  SBlockEigenvalues ev = eigenvalues(S);
  ActiveSpectrum a{{ev.delta1, ev.delta2, ev.delta3},
                   {ev.mult1 > 0, ev.mult2 > 0, ev.mult3 > 0},
                   0.0};
  for (int r = 0; r < 3; ++r) {
    if (a.active[r]) a.max_abs = std::max(a.max_abs, std::abs(a.delta[r]));
  }
  return a;
}

Eigen::VectorXd combine(const SpectralParts& parts, const double scale[3]) {
  return scale[0] * parts.mean + scale[1] * parts.between + scale[2] * parts.within;
}

}  // namespace

Eigen::MatrixXd materialize(const SBlock& S, int max_d) {
  if (S.d < 2) throw InvalidArgument("structured matrix needs d >= 2");
  if (S.d > max_d) {
    throw InvalidArgument("refusing to materialize a dense matrix for d=" + std::to_string(S.d) +
                          " (cap " + std::to_string(max_d) + ")");
  }
  PairTable t(S.d);
  const Index p = t.p();
  const double coef[3] = {S.s0, S.s1, S.s2};
  Eigen::MatrixXd out(p, p);
  for (Index k = 0; k < p; ++k) {
    for (Index l = 0; l < p; ++l) {
      int shared = (t.first(k) == t.first(l) || t.first(k) == t.second(l)) +
                   (t.second(k) == t.first(l) || t.second(k) == t.second(l));
      out(k, l) = coef[shared];
    }
  }
  return out;
}

SBlockEigenvalues eigenvalues(const SBlock& S) {
  if (S.d < 2) throw InvalidArgument("structured matrix needs d >= 2");
  SBlockEigenvalues ev;
  if (S.d == 2) {
    ev.delta1 = S.s2;
    ev.mult1 = 1;
    return ev;
  }
  Eigen::Vector3d delta = eigen_map(S.d) * Eigen::Vector3d(S.s0, S.s1, S.s2);
  ev.delta1 = delta(0);
  ev.delta2 = delta(1);
  ev.delta3 = delta(2);
  ev.mult1 = 1;
  ev.mult2 = S.d - 1;
  ev.mult3 = S.p() - S.d;
  return ev;
}

SpectralParts spectral_parts(const Eigen::VectorXd& v, int d) {
  SpectralParts parts;
  const Index p = v.size();
  parts.mean = Eigen::VectorXd::Constant(p, v.mean());
  if (d >= 4) {
    Eigen::VectorXd star = gamma_star_apply(v, d);
    parts.between = star - parts.mean;
    parts.within = v - star;
  } else if (d == 3) {
    parts.between = v - parts.mean;
    parts.within = Eigen::VectorXd::Zero(p);
  } else {
    parts.between = Eigen::VectorXd::Zero(p);
    parts.within = Eigen::VectorXd::Zero(p);
  }
  return parts;
}

Eigen::VectorXd matvec(const SBlock& S, const Eigen::VectorXd& v) {
  check_length(S, v);
  const int d = S.d;
  PairTable t(d);
  Eigen::VectorXd colsum = Eigen::VectorXd::Zero(d);
  for (Index k = 0; k < t.p(); ++k) {
    colsum(t.first(k)) += v(k);
    colsum(t.second(k)) += v(k);
  }
  const double total = v.sum();
  Eigen::VectorXd out(t.p());
  for (Index k = 0; k < t.p(); ++k) {
    double touching = colsum(t.first(k)) + colsum(t.second(k));
    out(k) = S.s2 * v(k) + S.s1 * (touching - 2 * v(k)) + S.s0 * (total - touching + v(k));
  }
  return out;
}

SBlock inverse(const SBlock& S) {
  ActiveSpectrum a = active_spectrum(S);
  for (int r = 0; r < 3; ++r) {
    if (a.active[r] && !(std::abs(a.delta[r]) >= 1e-14 * a.max_abs && a.max_abs > 0)) {
      throw SingularError("structured matrix is singular (eigenvalue " + std::to_string(a.delta[r]) + ")");
    }
  }
  SBlock out{0.0, 0.0, 0.0, S.d};
  if (S.d == 2) {
    out.s2 = 1.0 / S.s2;
    return out;
  }
  if (S.d == 3) {
    // Only s2 + 2 s1 and s2 - s1 are identifiable; s0 has no entries.
    double inv1 = 1.0 / a.delta[0];
    double inv2 = 1.0 / a.delta[1];
    out.s1 = (inv1 - inv2) / 3.0;
    out.s2 = inv2 + out.s1;
    return out;
  }
  Eigen::Vector3d target(1.0 / a.delta[0], 1.0 / a.delta[1], 1.0 / a.delta[2]);
  Eigen::Vector3d t = eigen_map(S.d).partialPivLu().solve(target);
  out.s0 = t(0);
  out.s1 = t(1);
  out.s2 = t(2);
  return out;
}

Eigen::VectorXd apply_power(const SBlock& S, const Eigen::VectorXd& v, double exponent) {
  check_length(S, v);
  ActiveSpectrum a = active_spectrum(S);
  const bool needs_positive = exponent < 0 || exponent != std::floor(exponent);
  double scale[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r) {
    if (!a.active[r]) continue;
    if (needs_positive && !(a.delta[r] > 1e-14 * a.max_abs && a.delta[r] > 0)) {
      throw SingularError("power " + std::to_string(exponent) +
                          " needs positive eigenvalues, found " + std::to_string(a.delta[r]));
    }
    scale[r] = std::pow(a.delta[r], exponent);
  }
  return combine(spectral_parts(v, S.d), scale);
}

Eigen::VectorXd apply_pseudo_power(const SBlock& S, const Eigen::VectorXd& v, double exponent,
                                   double rel_tol) {
  check_length(S, v);
  ActiveSpectrum a = active_spectrum(S);
  double scale[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r) {
    if (a.active[r] && a.delta[r] > rel_tol * a.max_abs && a.delta[r] > 0) {
      scale[r] = std::pow(a.delta[r], exponent);
    }
  }
  return combine(spectral_parts(v, S.d), scale);
}

double pseudo_quadratic(const SBlock& S, const Eigen::VectorXd& v, double rel_tol) {
  check_length(S, v);
  ActiveSpectrum a = active_spectrum(S);
  SpectralParts parts = spectral_parts(v, S.d);
  const Eigen::VectorXd* comp[3] = {&parts.mean, &parts.between, &parts.within};
  double out = 0.0;
  for (int r = 0; r < 3; ++r) {
    if (a.active[r] && a.delta[r] > rel_tol * a.max_abs && a.delta[r] > 0) {
      out += comp[r]->squaredNorm() / a.delta[r];
    }
  }
  return out;
}

Eigen::VectorXd gamma_apply(const Eigen::VectorXd& v) {
  return Eigen::VectorXd::Constant(v.size(), v.mean());
}

Eigen::VectorXd gamma_star_apply(const Eigen::VectorXd& v, int d) {
  if (d < 4) throw InvalidArgument("the pair-sum projection needs d >= 4");
  if (v.size() != num_pairs(d)) throw InvalidArgument("vector length does not match d");
  Eigen::VectorXd colmean = column_means(v);
  const double overall = v.mean();
  const double a = (d - 1.0) / (d - 2.0);
  const double b = d / (d - 2.0);
  PairTable t(d);
  Eigen::VectorXd out(t.p());
  for (Index k = 0; k < t.p(); ++k) {
    out(k) = a * (colmean(t.first(k)) + colmean(t.second(k))) - b * overall;
  }
  return out;
}

SBlock gamma_star_coefficients(int d) {
  if (d < 4) throw InvalidArgument("the pair-sum projection needs d >= 4");
  const double denom = (d - 1.0) * (d - 2.0);
  return SBlock{-2.0 / denom, (d - 3.0) / denom, 2.0 / (d - 1.0), d};
}

bool is_pd_all_d(double s0, double s1, double s2) {
  return s1 >= s0 && s0 >= 0 && (s2 - s1) > (s1 - s0);
}

}  // namespace kstruct
