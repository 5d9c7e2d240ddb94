// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/simulation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "kstruct/errors.hpp"

namespace kstruct {

TauStructure TauStructure::equicorrelated(double tau) {
  TauStructure s;
  s.kind = Kind::Equicorrelated;
  s.tau = tau;
  return s;
}

TauStructure TauStructure::block(std::vector<int> sizes, Eigen::MatrixXd values) {
  if (sizes.empty()) throw InvalidArgument("block structure needs at least one group");
  if (values.rows() != static_cast<Index>(sizes.size()) || values.cols() != values.rows()) {
    throw InvalidArgument("block values must be K x K for K groups");
  }
  for (int s : sizes) {
    if (s < 1) throw InvalidArgument("block sizes must be positive");
  }
  TauStructure s;
  s.kind = Kind::Block;
  s.sizes = std::move(sizes);
  s.block_values = 0.5 * (values + values.transpose());
  return s;
}

TauStructure TauStructure::block_preset(int d, bool balanced) {
  std::vector<int> sizes;
  if (balanced) {
    if (d % 3 != 0) throw InvalidArgument("balanced block preset needs d divisible by 3");
    sizes = {d / 3, d / 3, d / 3};
  } else {
    if (d % 6 != 0) throw InvalidArgument("unbalanced block preset needs d divisible by 6");
    sizes = {d / 6, d / 3, d / 2};
  }
  Eigen::MatrixXd values(3, 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) values(r, c) = 0.4 - 0.15 * std::abs(r - c);
  return block(sizes, values);
}

TauStructure TauStructure::custom_matrix(Eigen::MatrixXd T) {
  if (T.rows() != T.cols() || T.rows() < 2) throw InvalidArgument("custom Kendall matrix must be square");
  TauStructure s;
  s.kind = Kind::Custom;
  s.custom = std::move(T);
  return s;
}

Partition TauStructure::partition(int d) const {
  if (kind != Kind::Block) return Partition::single_group(d);
  std::vector<std::vector<int>> groups;
  int next = 1;
  for (int size : sizes) {
    std::vector<int> g;
    for (int i = 0; i < size; ++i) g.push_back(next++);
    groups.push_back(g);
  }
  if (next - 1 != d) throw InvalidArgument("block sizes do not add up to d");
  return Partition(d, groups);
}

std::string to_string(StudyHypothesis h) {
  switch (h) {
    case StudyHypothesis::Exchangeable:
      return "exchangeable";
    case StudyHypothesis::Ones:
      return "ones";
    case StudyHypothesis::Blocks:
      return "blocks";
    case StudyHypothesis::BlockDesign:
      return "block-design";
  }
  return "unknown";
}

double tau_to_pearson(double tau) {
  if (tau < -1.0 || tau > 1.0) throw InvalidArgument("Kendall value outside [-1, 1]");
  return std::sin(std::numbers::pi * tau / 2.0);
}

Eigen::MatrixXd tau_to_pearson(const Eigen::MatrixXd& T) {
  Eigen::MatrixXd R(T.rows(), T.cols());
  for (Index i = 0; i < T.rows(); ++i)
    for (Index j = 0; j < T.cols(); ++j) R(i, j) = i == j ? 1.0 : tau_to_pearson(T(i, j));
  return R;
}

Eigen::MatrixXd build_tau_matrix(int d, const TauStructure& structure, const Departure& departure) {
  if (d < 2) throw InvalidArgument("dimension must be at least 2");
  Eigen::MatrixXd T(d, d);
  switch (structure.kind) {
    case TauStructure::Kind::Equicorrelated:
      T.setConstant(structure.tau);
      break;
    case TauStructure::Kind::Block: {
      Partition part = structure.partition(d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) T(i, j) = structure.block_values(part.label(i), part.label(j));
      break;
    }
    case TauStructure::Kind::Custom:
      if (structure.custom.rows() != d) throw InvalidArgument("custom Kendall matrix has the wrong size");
      T = 0.5 * (structure.custom + structure.custom.transpose());
      break;
  }
  switch (departure.kind) {
    case Departure::Kind::None:
      break;
    case Departure::Kind::Single:
      T(0, 1) += departure.delta;
      T(1, 0) += departure.delta;
      break;
    case Departure::Kind::Column:
      for (int i = 1; i < d; ++i)
        for (int j = 1; j < d; ++j)
          if (i != j) T(i, j) += departure.delta;
      break;
  }
  T.diagonal().setOnes();
  if ((T.array().abs() > 1.0).any()) {
    throw InvalidArgument("Kendall matrix has an entry outside [-1, 1] after the departure");
  }
  return T;
}

Dataset sample_gaussian_with_tau(const Eigen::MatrixXd& T, Index n, Rng& rng) {
  const Index d = T.rows();
  if (T.cols() != d || d < 2) throw InvalidArgument("Kendall matrix must be square with d >= 2");
  if (n < 1) throw InvalidArgument("sample size must be positive");
  Eigen::MatrixXd R = tau_to_pearson(T);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R, Eigen::EigenvaluesOnly);
  const double min_eigen = eig.eigenvalues().minCoeff();
  if (!(min_eigen > 1e-12)) {
    throw NotPositiveDefinite(min_eigen, "correlation matrix is not positive definite (min eigenvalue " +
                                             std::to_string(min_eigen) + ")");
  }

  std::normal_distribution<double> normal;
  Dataset data;
  data.values.resize(n, d);

  const double rho = R(1, 0);
  bool equicorrelated = rho >= 0.0;
  for (Index i = 0; i < d && equicorrelated; ++i)
    for (Index j = 0; j < i; ++j)
      if (R(i, j) != rho) equicorrelated = false;

  if (equicorrelated) {
    const double a = std::sqrt(rho);
    const double b = std::sqrt(1.0 - rho);
    for (Index r = 0; r < n; ++r) {
      const double shared = normal(rng);
      for (Index j = 0; j < d; ++j) data.values(r, j) = a * shared + b * normal(rng);
    }
    return data;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite(min_eigen, "Cholesky factorization of the correlation matrix failed");
  }
  Eigen::MatrixXd Z(n, d);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < d; ++j) Z(r, j) = normal(rng);
  data.values = Z * llt.matrixL().transpose();
  return data;
}

double CellResult::se() const {
  if (valid == 0) return 0.0;
  double r = rate();
  return std::sqrt(r * (1.0 - r) / static_cast<double>(valid));
}

Hypothesis make_study_hypothesis(const ScenarioConfig& scenario, StudyHypothesis kind) {
  Hypothesis h;
  h.label = to_string(kind);
  switch (kind) {
    case StudyHypothesis::Exchangeable:
      h.value = Partition::single_group(scenario.d);
      break;
    case StudyHypothesis::Ones:
      h.value = ones_design(scenario.d);
      break;
    case StudyHypothesis::Blocks:
      h.value = scenario.structure.partition(scenario.d);
      break;
    case StudyHypothesis::BlockDesign:
      h.value = block_membership_matrix(scenario.structure.partition(scenario.d));
      break;
  }
  return h;
}

StudyResult run_study(const StudyConfig& config, Index rep_begin, Index rep_end,
                      const std::atomic<bool>* cancel, const std::function<void(Index, Index)>& progress) {
  if (rep_begin < 0 || rep_end < rep_begin) throw InvalidArgument("invalid repetition range");
  if (config.tests.empty()) throw InvalidArgument("study has no tests");
  if (!(config.alpha > 0 && config.alpha < 1)) throw InvalidArgument("level must lie in (0, 1)");

  const auto start = std::chrono::steady_clock::now();
  const Index S = static_cast<Index>(config.scenarios.size());
  const Index Tn = static_cast<Index>(config.tests.size());
  const Index reps = rep_end - rep_begin;

  StudyResult result;
  result.rep_begin = rep_begin;
  result.rep_end = rep_end;
  result.cells.resize(S * Tn);
  result.scenario_seconds.assign(S, 0.0);

  // Outcome codes per (repetition, test): 0 accept, 1 reject, 2 failed, 3 not run.
  enum : char { kAccept = 0, kReject = 1, kFailed = 2, kSkipped = 3 };
  Index done = 0;
  const Index total = S * reps;

  for (Index s = 0; s < S; ++s) {
    const auto scenario_start = std::chrono::steady_clock::now();
    const ScenarioConfig& sc = config.scenarios[s];
    const Eigen::MatrixXd T = build_tau_matrix(sc.d, sc.structure, sc.departure);
    std::vector<Hypothesis> hypotheses;
    for (const auto& t : config.tests) hypotheses.push_back(make_study_hypothesis(sc, t.hypothesis));

    std::vector<char> outcome(static_cast<std::size_t>(reps * Tn), kSkipped);
    parallel_for(reps, [&](Index i) {
      if (cancel && cancel->load()) return;
      const Index rep = rep_begin + i;
      char* row = &outcome[static_cast<std::size_t>(i * Tn)];
      std::optional<LeaveOneOutTaus> loo;
      try {
        Rng rng = make_rng(config.seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(rep), 0});
        loo = leave_one_out(sample_gaussian_with_tau(T, sc.n, rng));
      } catch (const Error&) {
        for (Index t = 0; t < Tn; ++t) row[t] = kFailed;
        return;
      }
      for (Index t = 0; t < Tn; ++t) {
        TestOptions opts = config.tests[t].options;
        opts.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(rep),
                                              static_cast<std::uint64_t>(t + 1)});
        try {
          TestReport rep_report = run_test(*loo, hypotheses[t], opts);
          row[t] = rep_report.p_value < config.alpha ? kReject : kAccept;
        } catch (const Error&) {
          row[t] = kFailed;
        }
      }
    });

    Index completed = 0;
    for (Index i = 0; i < reps; ++i) {
      bool ran = outcome[static_cast<std::size_t>(i * Tn)] != kSkipped;
      completed += ran;
      for (Index t = 0; t < Tn; ++t) {
        CellResult& cell = result.cells[s * Tn + t];
        char o = outcome[static_cast<std::size_t>(i * Tn + t)];
        if (o == kReject) {
          ++cell.rejections;
          ++cell.valid;
        } else if (o == kAccept) {
          ++cell.valid;
        } else if (o == kFailed) {
          ++cell.failed;
        }
      }
    }
    for (Index t = 0; t < Tn; ++t) {
      result.cells[s * Tn + t].scenario = s;
      result.cells[s * Tn + t].test = t;
    }
    result.completed_repetitions += completed;
    if (completed < reps) result.completed = false;
    result.scenario_seconds[s] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - scenario_start).count();
    done += reps;
    if (progress) progress(done, total);
    if (cancel && cancel->load()) {
      result.completed = false;
      for (Index s2 = s + 1; s2 < S; ++s2) {
        for (Index t = 0; t < Tn; ++t) {
          result.cells[s2 * Tn + t].scenario = s2;
          result.cells[s2 * Tn + t].test = t;
        }
      }
      break;
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

StudyResult run_study(const StudyConfig& config) { return run_study(config, 0, config.repetitions); }

StudyResult merge_results(const StudyResult& a, const StudyResult& b) {
  if (a.cells.size() != b.cells.size()) throw InvalidArgument("results describe different studies");
  const bool disjoint = a.rep_end <= b.rep_begin || b.rep_end <= a.rep_begin;
  if (!disjoint) throw InvalidArgument("repetition ranges overlap");
  StudyResult out = a;
  for (std::size_t c = 0; c < a.cells.size(); ++c) {
    if (a.cells[c].scenario != b.cells[c].scenario || a.cells[c].test != b.cells[c].test) {
      throw InvalidArgument("results describe different studies");
    }
    out.cells[c].rejections += b.cells[c].rejections;
    out.cells[c].valid += b.cells[c].valid;
    out.cells[c].failed += b.cells[c].failed;
  }
  out.rep_begin = std::min(a.rep_begin, b.rep_begin);
  out.rep_end = std::max(a.rep_end, b.rep_end);
  out.completed_repetitions = a.completed_repetitions + b.completed_repetitions;
  out.completed = a.completed && b.completed;
  out.seconds = a.seconds + b.seconds;
  out.scenario_seconds = a.scenario_seconds;
  for (std::size_t s = 0; s < out.scenario_seconds.size() && s < b.scenario_seconds.size(); ++s) {
    out.scenario_seconds[s] += b.scenario_seconds[s];
  }
  return out;
}

}  // namespace kstruct
