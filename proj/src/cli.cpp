// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "kstruct/errors.hpp"
#include "kstruct/io.hpp"
#include "kstruct/simulation.hpp"

namespace kstruct {

namespace fs = std::filesystem;
using nlohmann::json;

DetrendResult detrend_linear(const Dataset& data, const Eigen::VectorXd& covariate) {
  const Index n = data.n();
  if (covariate.size() != n) throw InvalidArgument("covariate length must match the number of rows");
  const double mean_t = covariate.mean();
  const Eigen::VectorXd centred = covariate.array() - mean_t;
  const double sxx = centred.squaredNorm();
  const double scale = std::max(1.0, covariate.cwiseAbs().maxCoeff());
  if (!(sxx > 1e-24 * scale * scale * n)) throw ConstantCovariate("covariate is constant; no trend to remove");

  DetrendResult out;
  out.residuals.values.resize(n, data.d());
  out.slopes.resize(data.d());
  out.intercepts.resize(data.d());
  for (int c = 0; c < data.d(); ++c) {
    const auto col = data.values.col(c);
    const double slope = centred.dot(col) / sxx;
    const double intercept = col.mean() - slope * mean_t;
    out.slopes(c) = slope;
    out.intercepts(c) = intercept;
    out.residuals.values.col(c) = col - (intercept + slope * covariate.array()).matrix();
  }
  return out;
}

DetrendResult detrend_linear(const Dataset& data) {
  Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(data.n(), 1.0, static_cast<double>(data.n()));
  return detrend_linear(data, t);
}

std::pair<Hypothesis, Estimator> resolve_hypothesis(HypothesisSource source, const std::string& file, int d,
                                                    const std::string& estimator) {
  const bool structured = estimator == "structured";
  if (!structured && estimator != "jackknife") {
    throw InvalidArgument("unknown estimator '" + estimator + "' (structured|jackknife)");
  }
  auto check_d = [&](int got) {
    if (got != d) {
      throw InvalidArgument(file + ": hypothesis is for d=" + std::to_string(got) + " but the data has d=" +
                            std::to_string(d));
    }
  };
  switch (source) {
    case HypothesisSource::Exchangeable:
      if (structured) {
        return {Hypothesis{Partition::single_group(d), "exchangeable"}, Estimator::StructuredJackknifeExchangeable};
      }
      return {Hypothesis{ones_design(d), "exchangeable (design 1_p)"}, Estimator::Jackknife};
    case HypothesisSource::Partition: {
      Partition part = read_partition_json(file);
      check_d(part.d());
      if (structured) {
        Estimator e = part.num_groups() == 1 ? Estimator::StructuredJackknifeExchangeable
                                             : Estimator::StructuredJackknifePartition;
        return {Hypothesis{part, "partition " + fs::path(file).filename().string()}, e};
      }
      return {Hypothesis{block_membership_matrix(part), "block design " + fs::path(file).filename().string()},
              Estimator::Jackknife};
    }
    case HypothesisSource::Design: {
      if (structured) throw InvalidArgument("design hypotheses need --estimator jackknife");
      DesignMatrix B = read_design_csv(file);
      check_d(B.d());
      return {Hypothesis{B, "design " + fs::path(file).filename().string()}, Estimator::Jackknife};
    }
    case HypothesisSource::DiagonalFree: {
      if (structured) throw InvalidArgument("diagonal-free hypotheses need --estimator jackknife");
      Partition part = read_partition_json(file);
      check_d(part.d());
      return {Hypothesis{diagonal_free_membership_matrix(part),
                         "diagonal-free " + fs::path(file).filename().string()},
              Estimator::Jackknife};
    }
  }
  throw InvalidArgument("unknown hypothesis source");
}

namespace {

std::string stem_path(const std::string& out) {
  fs::path p(out);
  return (p.parent_path() / p.stem()).string();
}

void ensure_parent(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

}  // namespace

TestReport cmd_test(const TestCommand& cmd, std::ostream& log) {
  std::vector<std::string> names;
  Dataset data = read_dataset_csv(cmd.data, cmd.columns, &names);
  std::vector<std::string> notes;

  if (cmd.detrend) {
    data = detrend_linear(data).residuals;
    notes.push_back("linear time trend removed from every column before testing");
  }
  if (cmd.jitter_ties) {
    int touched = jitter_ties(data, derive_seed(cmd.seed, {0x7469}));
    if (touched > 0) notes.push_back("ties broken by jitter in " + std::to_string(touched) + " column(s)");
  }
  if (cmd.ljung_box) {
    log << "note: no serial-dependence check is built in; run a Ljung-Box test on each column "
           "(for example statsmodels acorr_ljungbox) before relying on the i.i.d. assumption\n";
  }

  auto [hypothesis, estimator] = resolve_hypothesis(cmd.source, cmd.hypothesis_file, data.d(), cmd.estimator);
  TestOptions options;
  options.statistic = parse_statistic(cmd.statistic);
  options.weighting = parse_weighting(cmd.weighting);
  options.estimator = estimator;
  options.replicates = cmd.replicates;
  options.seed = cmd.seed;
  options.conservative = cmd.conservative;
  options.bootstrap = cmd.bootstrap;

  TestReport report = run_test(data, hypothesis, options);
  report.warnings.insert(report.warnings.begin(), notes.begin(), notes.end());

  json j = report_to_json(report);
  j["version"] = kVersion;
  j["input"] = {{"path", cmd.data}, {"digest", file_digest(cmd.data)}, {"columns", names}};
  if (!cmd.hypothesis_file.empty()) {
    j["hypothesis_file"] = {{"path", cmd.hypothesis_file}, {"digest", file_digest(cmd.hypothesis_file)}};
  }
  j["options"] = {{"bootstrap", cmd.bootstrap}, {"jitter_ties", cmd.jitter_ties}, {"detrend", cmd.detrend}};

  if (cmd.out.empty()) {
    log << j.dump(2) << "\n";
  } else {
    ensure_parent(cmd.out);
    std::ofstream f(cmd.out);
    if (!f) throw InvalidArgument(cmd.out + ": cannot write report");
    f << j.dump(2) << "\n";
    const std::string stem = stem_path(cmd.out);
    write_matrix_csv(stem + "_tau.csv", tau_matrix(report.tau), names);
    write_matrix_csv(stem + "_theta.csv", tau_matrix(report.theta), names);
    log << std::setprecision(6) << report.statistic << "/" << report.weighting << "/" << report.estimator
        << " value=" << report.value << " p=" << report.p_value << " (" << report.method << ")\n";
    for (const auto& w : report.warnings) log << "warning: " << w << "\n";
    log << "report written to " << cmd.out << "\n";
  }
  return report;
}

std::pair<Index, Index> parse_shard(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) throw InvalidArgument("shard must look like A:B");
  try {
    Index a = std::stoll(text.substr(0, colon));
    Index b = std::stoll(text.substr(colon + 1));
    if (a < 0 || b <= a) throw InvalidArgument("shard A:B needs 0 <= A < B");
    return {a, b};
  } catch (const std::logic_error&) {
    throw InvalidArgument("shard must look like A:B with integers");
  }
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument(path + ": cannot write file");
  f << j.dump(2) << "\n";
}

// cells.csv keeps the text columns last so panel labels may hold commas.
void write_cells(const std::string& path, const StudyConfig& cfg, const StudyResult& res) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument(path + ": cannot write file");
  f << "scenario,test,rejections,valid,failed,d,n,rate,se,test_label,panel\n";
  f << std::setprecision(10);
  for (const auto& c : res.cells) {
    const auto& sc = cfg.scenarios[c.scenario];
    f << c.scenario << "," << c.test << "," << c.rejections << "," << c.valid << "," << c.failed << "," << sc.d
      << "," << sc.n << "," << c.rate() << "," << c.se() << "," << cfg.tests[c.test].label << "," << sc.panel
      << "\n";
  }
}

std::vector<CellResult> read_cells(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument(path + ": cannot open file");
  std::string line;
  std::getline(f, line);
  std::vector<CellResult> cells;
  Index lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Index v[5];
    for (Index& x : v) {
      if (!std::getline(ss, field, ',')) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": short row");
      x = std::stoll(field);
    }
    cells.push_back(CellResult{v[0], v[1], v[2], v[3], v[4]});
  }
  return cells;
}

std::string safe_name(const std::string& label) {
  std::string s;
  for (char c : label) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return s;
}

// One table per test: rows (panel, d), columns rate% and se% per n.
void write_tables(const std::string& dir, const StudyConfig& cfg, const StudyResult& res) {
  std::vector<Index> ns;
  std::vector<std::pair<std::string, int>> rows;
  for (const auto& sc : cfg.scenarios) {
    if (std::find(ns.begin(), ns.end(), sc.n) == ns.end()) ns.push_back(sc.n);
    std::pair<std::string, int> key{sc.panel, sc.d};
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  std::sort(ns.begin(), ns.end());
  for (std::size_t t = 0; t < cfg.tests.size(); ++t) {
    std::map<std::pair<std::size_t, Index>, const CellResult*> lookup;
    for (const auto& c : res.cells) {
      if (c.test != static_cast<Index>(t)) continue;
      const auto& sc = cfg.scenarios[c.scenario];
      std::size_t r = std::find(rows.begin(), rows.end(), std::make_pair(sc.panel, sc.d)) - rows.begin();
      lookup[{r, sc.n}] = &c;
    }
    std::ofstream f(dir + "/table_" + safe_name(cfg.tests[t].label) + ".csv");
    f << "panel,d";
    for (Index n : ns) f << ",rate%_n" << n << ",se%_n" << n;
    f << "\n" << std::fixed << std::setprecision(2);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      f << "\"" << rows[r].first << "\"," << rows[r].second;
      for (Index n : ns) {
        auto it = lookup.find({r, n});
        if (it == lookup.end()) {
          f << ",,";
        } else {
          f << "," << 100.0 * it->second->rate() << "," << 100.0 * it->second->se();
        }
      }
      f << "\n";
    }
  }
}

json base_manifest(const StudyConfig& cfg, const std::string& config_digest, bool desk_scale) {
  json m;
  m["version"] = kVersion;
  m["config_digest"] = config_digest;
  m["seed"] = cfg.seed;
  m["repetitions"] = cfg.repetitions;
  m["alpha"] = cfg.alpha;
  m["desk_scale"] = desk_scale;
  m["scenarios"] = cfg.scenarios.size();
  m["tests"] = cfg.tests.size();
  m["threads"] = worker_count();
  return m;
}

void fill_result(json& m, const StudyResult& res) {
  Index failed = 0;
  for (const auto& c : res.cells) failed += c.failed;
  m["shard"] = {res.rep_begin, res.rep_end};
  m["completed"] = res.completed;
  m["completed_repetitions"] = res.completed_repetitions;
  m["failed_fits"] = failed;
  m["seconds"] = res.seconds;
  m["scenario_seconds"] = res.scenario_seconds;
}

}  // namespace

bool cmd_simulate(const SimulateCommand& cmd, std::ostream& log, const std::atomic<bool>* cancel) {
  json raw = read_json_file(cmd.config);
  StudyConfig cfg = study_config_from_json(raw, cmd.desk_scale);
  Index begin = 0, end = cfg.repetitions;
  if (cmd.shard) {
    begin = cmd.shard->first;
    end = std::min(cmd.shard->second, cfg.repetitions);
    if (begin >= end) throw InvalidArgument("shard lies outside the configured repetitions");
  }
  fs::create_directories(cmd.out_dir);
  const std::string digest = file_digest(cmd.config);
  json stored = {{"config", raw}, {"desk_scale", cmd.desk_scale}};
  write_json_file(cmd.out_dir + "/config.json", stored);

  log << "simulating " << cfg.scenarios.size() << " scenario(s) x " << cfg.tests.size() << " test(s), repetitions ["
      << begin << ", " << end << ") on " << worker_count() << " thread(s)\n";
  StudyResult res = run_study(cfg, begin, end, cancel, [&](Index done, Index total) {
    log << "  " << done << "/" << total << " scenario-repetitions done\n";
  });

  write_cells(cmd.out_dir + "/cells.csv", cfg, res);
  write_tables(cmd.out_dir, cfg, res);
  json manifest = base_manifest(cfg, digest, cmd.desk_scale);
  fill_result(manifest, res);
  write_json_file(cmd.out_dir + "/manifest.json", manifest);
  if (!res.completed) log << "interrupted: partial results written to " << cmd.out_dir << "\n";
  else log << "results written to " << cmd.out_dir << "\n";
  return res.completed;
}

void cmd_detrend(const DetrendCommand& cmd, std::ostream& log) {
  std::vector<std::string> names;
  Dataset data = read_dataset_csv(cmd.data, cmd.columns, &names);
  DetrendResult fit;
  if (cmd.covariate_column > 0) {
    CsvTable table = read_csv(cmd.data);
    if (cmd.covariate_column > table.values.cols()) throw InvalidArgument("covariate column does not exist");
    fit = detrend_linear(data, table.values.col(cmd.covariate_column - 1));
  } else {
    fit = detrend_linear(data);
  }
  ensure_parent(cmd.out);
  write_matrix_csv(cmd.out, fit.residuals.values, names);
  log << std::setprecision(6);
  for (int c = 0; c < data.d(); ++c) {
    log << names[c] << ": slope " << fit.slopes(c) << ", intercept " << fit.intercepts(c) << "\n";
  }
  log << "residuals written to " << cmd.out << "\n";
}

void cmd_merge(const std::vector<std::string>& shard_dirs, const std::string& out_dir, std::ostream& log) {
  if (shard_dirs.empty()) throw InvalidArgument("merge needs at least one shard directory");
  json stored = read_json_file(shard_dirs.front() + "/config.json");
  const bool desk = stored.value("desk_scale", false);
  StudyConfig cfg = study_config_from_json(stored.at("config"), desk);
  std::string digest;
  std::vector<std::pair<Index, Index>> ranges;
  StudyResult total;
  bool first = true;
  for (const auto& dir : shard_dirs) {
    json m = read_json_file(dir + "/manifest.json");
    if (first) {
      digest = m.at("config_digest").get<std::string>();
    } else if (m.at("config_digest").get<std::string>() != digest) {
      throw InvalidArgument(dir + ": shard was produced from a different configuration");
    }
    StudyResult part;
    part.cells = read_cells(dir + "/cells.csv");
    part.rep_begin = m.at("shard")[0].get<Index>();
    part.rep_end = m.at("shard")[1].get<Index>();
    part.completed = m.at("completed").get<bool>();
    part.completed_repetitions = m.at("completed_repetitions").get<Index>();
    part.seconds = m.at("seconds").get<double>();
    part.scenario_seconds = m.at("scenario_seconds").get<std::vector<double>>();
    for (const auto& r : ranges) {
      if (part.rep_begin < r.second && r.first < part.rep_end) {
        throw InvalidArgument(dir + ": repetition range overlaps another shard");
      }
    }
    ranges.emplace_back(part.rep_begin, part.rep_end);
    total = first ? part : merge_results(total, part);
    first = false;
  }
  std::sort(ranges.begin(), ranges.end());
  bool covers = ranges.front().first == 0 && ranges.back().second == cfg.repetitions;
  for (std::size_t i = 1; i < ranges.size(); ++i) covers = covers && ranges[i].first == ranges[i - 1].second;
  total.rep_begin = ranges.front().first;
  total.rep_end = ranges.back().second;

  fs::create_directories(out_dir);
  write_json_file(out_dir + "/config.json", stored);
  write_cells(out_dir + "/cells.csv", cfg, total);
  write_tables(out_dir, cfg, total);
  json manifest = base_manifest(cfg, digest, desk);
  fill_result(manifest, total);
  manifest["merged_from"] = shard_dirs;
  manifest["covers_all_repetitions"] = covers;
  write_json_file(out_dir + "/manifest.json", manifest);
  log << "merged " << shard_dirs.size() << " shard(s) into " << out_dir
      << (covers ? "" : " (repetition ranges leave gaps)") << "\n";
}

}  // namespace kstruct
