// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0
//
// Symmetric p x p matrices whose (k, l) entry depends only on how many
// endpoints the pairs k and l share: s2 for the same pair, s1 for one shared
// variable, s0 for disjoint pairs. Every such matrix is diagonalized by the
// same three orthogonal projectors:
//   mean part      Gamma v = mean(v) 1                         (multiplicity 1)
//   between part   (Gamma* - Gamma) v                          (multiplicity d-1)
//   within part    (I - Gamma*) v                              (multiplicity p-d)
// where Gamma* projects onto vectors of the form a_i + a_j.

#pragma once

#include <Eigen/Dense>

#include "kstruct/runtime.hpp"

namespace kstruct {

struct SBlock {
  double s0 = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  int d = 2;

  Index p() const { return static_cast<Index>(d) * (d - 1) / 2; }
};

struct SBlockEigenvalues {
  double delta1 = 0.0;  // mean direction
  double delta2 = 0.0;  // between direction
  double delta3 = 0.0;  // within direction
  Index mult1 = 0;
  Index mult2 = 0;
  Index mult3 = 0;
};

struct SpectralParts {
  Eigen::VectorXd within;
  Eigen::VectorXd between;
  Eigen::VectorXd mean;
};

inline constexpr int kDefaultMaterializeCap = 60;

Eigen::MatrixXd materialize(const SBlock& S, int max_d = kDefaultMaterializeCap);
SBlockEigenvalues eigenvalues(const SBlock& S);
Eigen::VectorXd matvec(const SBlock& S, const Eigen::VectorXd& v);
SBlock inverse(const SBlock& S);

// S^a v via the spectral projectors. Negative or fractional powers need
// positive eigenvalues (SingularError otherwise).
Eigen::VectorXd apply_power(const SBlock& S, const Eigen::VectorXd& v, double exponent);

// Same as apply_power, but eigenvalues at or below rel_tol * max|delta| are
// treated as zero (Moore-Penrose powers of a PSD member).
Eigen::VectorXd apply_pseudo_power(const SBlock& S, const Eigen::VectorXd& v, double exponent,
                                   double rel_tol = 1e-10);

// v' S^+ v, with the same zero threshold as apply_pseudo_power.
double pseudo_quadratic(const SBlock& S, const Eigen::VectorXd& v, double rel_tol = 1e-10);

Eigen::VectorXd gamma_apply(const Eigen::VectorXd& v);
Eigen::VectorXd gamma_star_apply(const Eigen::VectorXd& v, int d);
SBlock gamma_star_coefficients(int d);

// Decomposition of v into the three eigenspaces; parts with multiplicity 0
// are returned as zero vectors.
SpectralParts spectral_parts(const Eigen::VectorXd& v, int d);

bool is_pd_all_d(double s0, double s1, double s2);

}  // namespace kstruct
