// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "kstruct/cli.hpp"
#include "kstruct/errors.hpp"
#include "kstruct/runtime.hpp"

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tests of structure in Kendall tau matrices"};
  app.set_version_flag("--version", std::string(kstruct::kVersion));
  app.require_subcommand(1);

  kstruct::TestCommand test;
  std::string hypothesis = "exchangeable";
  std::string hypothesis_file;
  auto* t = app.add_subcommand("test", "Test a structural hypothesis on one dataset");
  t->add_option("--data", test.data, "CSV file, one row per observation")->required()->check(CLI::ExistingFile);
  t->add_option("--columns", test.columns, "1-based columns to use (default: all)")->delimiter(',');
  t->add_option("--hypothesis", hypothesis, "exchangeable | partition | design | diagonal-free")
      ->check(CLI::IsMember({"exchangeable", "partition", "design", "diagonal-free"}));
  t->add_option("--hypothesis-file", hypothesis_file, "partition JSON or design CSV")->check(CLI::ExistingFile);
  t->add_option("--statistic", test.statistic, "euclidean | max")->check(CLI::IsMember({"euclidean", "max"}));
  t->add_option("--weighting", test.weighting, "sigma | identity")->check(CLI::IsMember({"sigma", "identity"}));
  t->add_option("--estimator", test.estimator, "structured | jackknife")
      ->check(CLI::IsMember({"structured", "jackknife"}));
  t->add_option("--replicates", test.replicates, "Monte Carlo replicates")->check(CLI::PositiveNumber);
  t->add_option("--seed", test.seed, "random seed");
  t->add_flag("--conservative", test.conservative, "report (1 + exceedances) / (1 + N)");
  t->add_flag("--bootstrap", test.bootstrap, "multiplier bootstrap null (identity weighting, jackknife)");
  t->add_flag("--jitter-ties", test.jitter_ties, "break ties with tiny seeded noise instead of failing");
  t->add_flag("--detrend", test.detrend, "remove a linear time trend from every column first");
  t->add_flag("--ljung-box", test.ljung_box, "print guidance on checking serial dependence");
  t->add_option("--out", test.out, "report JSON path (default: print to stdout)");

  kstruct::SimulateCommand sim;
  std::string shard;
  auto* s = app.add_subcommand("simulate", "Run a rejection-rate study");
  s->add_option("--config", sim.config, "study JSON")->required()->check(CLI::ExistingFile);
  s->add_option("--out", sim.out_dir, "output directory")->required();
  s->add_option("--shard", shard, "repetitions A:B (0-based, B exclusive)");
  s->add_flag("--desk-scale", sim.desk_scale, "cap at 1000 repetitions and 2000 replicates");

  kstruct::DetrendCommand det;
  auto* dt = app.add_subcommand("detrend", "Remove a linear trend from each column");
  dt->add_option("--data", det.data, "CSV file")->required()->check(CLI::ExistingFile);
  dt->add_option("--columns", det.columns, "1-based columns to detrend")->delimiter(',');
  dt->add_option("--covariate", det.covariate_column, "1-based covariate column (default: row index)");
  dt->add_option("--out", det.out, "output CSV")->required();

  std::vector<std::string> shards;
  std::string merge_out;
  auto* m = app.add_subcommand("merge", "Combine shard outputs of simulate");
  m->add_option("shards", shards, "shard directories")->required()->check(CLI::ExistingDirectory);
  m->add_option("--out", merge_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*t) {
      using kstruct::HypothesisSource;
      test.source = hypothesis == "partition"       ? HypothesisSource::Partition
                    : hypothesis == "design"        ? HypothesisSource::Design
                    : hypothesis == "diagonal-free" ? HypothesisSource::DiagonalFree
                                                    : HypothesisSource::Exchangeable;
      if (test.source != HypothesisSource::Exchangeable && hypothesis_file.empty()) {
        throw kstruct::InvalidArgument("--hypothesis " + hypothesis + " needs --hypothesis-file");
      }
      test.hypothesis_file = hypothesis_file;
      kstruct::cmd_test(test, test.out.empty() ? std::cout : std::cerr);
    } else if (*s) {
      if (!shard.empty()) sim.shard = kstruct::parse_shard(shard);
      std::signal(SIGINT, on_sigint);
      bool done = kstruct::cmd_simulate(sim, std::cerr, &g_cancel);
      return done ? 0 : 130;
    } else if (*dt) {
      kstruct::cmd_detrend(det, std::cerr);
    } else if (*m) {
      kstruct::cmd_merge(shards, merge_out, std::cerr);
    }
  } catch (const kstruct::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
