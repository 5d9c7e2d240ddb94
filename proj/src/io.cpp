// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0

#include "kstruct/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "kstruct/errors.hpp"

namespace kstruct {

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n\"";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(path + ": cannot open file");
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  Index lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_double(fields[c], row[c])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty() && table.header.empty()) {
        table.header = fields;
        width = fields.size();
        continue;
      }
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                            " fields, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgument(path + ": no numeric rows");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) table.values(r, c) = rows[r][c];
  return table;
}

Dataset read_dataset_csv(const std::string& path, const std::vector<int>& columns,
                         std::vector<std::string>* names) {
  CsvTable table = read_csv(path);
  Dataset data;
  std::vector<std::string> header = table.header;
  if (header.empty()) {
    for (Index c = 0; c < table.values.cols(); ++c) header.push_back("V" + std::to_string(c + 1));
  }
  if (columns.empty()) {
    data.values = table.values;
    if (names) *names = header;
  } else {
    data.values.resize(table.values.rows(), static_cast<Index>(columns.size()));
    if (names) names->clear();
    for (std::size_t i = 0; i < columns.size(); ++i) {
      int c = columns[i];
      if (c < 1 || c > table.values.cols()) {
        throw InvalidArgument(path + ": column " + std::to_string(c) + " does not exist");
      }
      data.values.col(static_cast<Index>(i)) = table.values.col(c - 1);
      if (names) names->push_back(header[c - 1]);
    }
  }
  if (data.d() < 2 || data.n() < 2) throw InvalidArgument(path + ": need at least 2 rows and 2 columns");
  return data;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M, const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument(path + ": cannot write file");
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << "\n";
  }
  out << std::setprecision(17);
  for (Index r = 0; r < M.rows(); ++r) {
    for (Index c = 0; c < M.cols(); ++c) out << (c ? "," : "") << M(r, c);
    out << "\n";
  }
}

Partition partition_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("groups")) throw InvalidArgument("partition JSON needs a \"groups\" list");
  std::vector<std::vector<int>> groups = j.at("groups").get<std::vector<std::vector<int>>>();
  int d = 0;
  if (j.contains("d")) {
    d = j.at("d").get<int>();
  } else {
    for (const auto& g : groups)
      for (int v : g) d = std::max(d, v);
  }
  return Partition(d, groups);
}

Partition read_partition_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(path + ": cannot open file");
  try {
    return partition_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

DesignMatrix read_design_csv(const std::string& path) {
  CsvTable table = read_csv(path);
  try {
    return make_design_matrix(table.values, table.header);
  } catch (const Error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

std::string text_digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return text_digest(ss.str());
}

Statistic parse_statistic(const std::string& s) {
  std::string v = lower(s);
  if (v == "euclidean" || v == "e") return Statistic::Euclidean;
  if (v == "max" || v == "m") return Statistic::Max;
  throw InvalidArgument("unknown statistic '" + s + "' (euclidean|max)");
}

Weighting parse_weighting(const std::string& s) {
  std::string v = lower(s);
  if (v == "identity") return Weighting::IdentityOverN;
  if (v == "sigma") return Weighting::EstimatedCovariance;
  throw InvalidArgument("unknown weighting '" + s + "' (identity|sigma)");
}

StudyHypothesis parse_study_hypothesis(const std::string& s) {
  std::string v = lower(s);
  if (v == "exchangeable") return StudyHypothesis::Exchangeable;
  if (v == "ones") return StudyHypothesis::Ones;
  if (v == "blocks") return StudyHypothesis::Blocks;
  if (v == "block-design") return StudyHypothesis::BlockDesign;
  throw InvalidArgument("unknown study hypothesis '" + s + "' (exchangeable|ones|blocks|block-design)");
}

nlohmann::json report_to_json(const TestReport& report) {
  nlohmann::json j;
  j["statistic"] = report.statistic;
  j["weighting"] = report.weighting;
  j["estimator"] = report.estimator;
  j["hypothesis"] = report.hypothesis;
  j["value"] = report.value;
  j["p_value"] = report.p_value;
  j["method"] = report.method;
  j["N"] = report.replicates;
  j["seed"] = report.seed;
  j["conservative"] = report.conservative;
  j["n"] = report.n;
  j["d"] = report.d;
  j["p"] = report.p;
  j["L"] = report.L;
  if (!report.eigenvalues.empty()) {
    j["eigenvalues"] = nlohmann::json::array();
    for (const auto& t : report.eigenvalues) {
      j["eigenvalues"].push_back({{"lambda", t.lambda}, {"multiplicity", t.multiplicity}});
    }
  }
  j["warnings"] = report.warnings;
  nlohmann::json beta = nlohmann::json::array();
  for (Index c = 0; c < report.beta.size(); ++c) {
    std::string label = c < static_cast<Index>(report.beta_labels.size()) ? report.beta_labels[c]
                                                                          : "b" + std::to_string(c + 1);
    beta.push_back({{"label", label}, {"value", report.beta(c)}});
  }
  j["beta"] = beta;
  return j;
}

namespace {

Estimator resolve_estimator(const std::string& name, StudyHypothesis h) {
  std::string v = lower(name);
  if (v == "jackknife") return Estimator::Jackknife;
  if (v == "structured-exchangeable") return Estimator::StructuredJackknifeExchangeable;
  if (v == "structured-partition") return Estimator::StructuredJackknifePartition;
  if (v == "structured") {
    if (h == StudyHypothesis::Exchangeable) return Estimator::StructuredJackknifeExchangeable;
    if (h == StudyHypothesis::Blocks) return Estimator::StructuredJackknifePartition;
    throw InvalidArgument("structured estimators need the exchangeable or blocks hypothesis");
  }
  throw InvalidArgument("unknown estimator '" + name + "'");
}

Departure departure_from_json(const nlohmann::json& j) {
  Departure dep;
  std::string type = lower(j.value("type", "none"));
  dep.delta = j.value("delta", 0.0);
  if (type == "none") {
    dep.kind = Departure::Kind::None;
  } else if (type == "single") {
    dep.kind = Departure::Kind::Single;
  } else if (type == "column") {
    dep.kind = Departure::Kind::Column;
  } else {
    throw InvalidArgument("unknown departure type '" + type + "'");
  }
  return dep;
}

std::string departure_label(const Departure& dep) {
  std::ostringstream os;
  switch (dep.kind) {
    case Departure::Kind::None:
      return "none";
    case Departure::Kind::Single:
      os << "single " << dep.delta;
      break;
    case Departure::Kind::Column:
      os << "column " << dep.delta;
      break;
  }
  return os.str();
}

template <typename T>
std::vector<T> as_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw InvalidArgument(std::string("scenario needs \"") + key + "\"");
  const auto& v = j.at(key);
  if (v.is_array()) return v.get<std::vector<T>>();
  return {v.get<T>()};
}

}  // namespace

StudyConfig study_config_from_json(const nlohmann::json& j, bool desk_scale) {
  StudyConfig cfg;
  try {
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.repetitions = j.value("repetitions", Index{2500});
    cfg.alpha = j.value("alpha", 0.05);
    const bool preset_desk = lower(j.value("preset", std::string("full"))) == "desk";
    desk_scale = desk_scale || preset_desk;
    if (desk_scale) cfg.repetitions = std::min<Index>(cfg.repetitions, 1000);

    for (const auto& t : j.at("tests")) {
      StudyTest test;
      test.hypothesis = parse_study_hypothesis(t.value("hypothesis", std::string("exchangeable")));
      test.options.statistic = parse_statistic(t.value("statistic", std::string("euclidean")));
      test.options.weighting = parse_weighting(t.value("weighting", std::string("sigma")));
      test.options.estimator = resolve_estimator(t.value("estimator", std::string("structured")), test.hypothesis);
      test.options.replicates = t.value("replicates", Index{5000});
      if (desk_scale) test.options.replicates = std::min<Index>(test.options.replicates, 2000);
      test.options.bootstrap = t.value("bootstrap", false);
      test.options.conservative = t.value("conservative", false);
      test.label = t.value("label", to_string(test.options.statistic) + "-" + to_string(test.options.weighting) +
                                        "-" + to_string(test.options.estimator) + "-" +
                                        to_string(test.hypothesis));
      cfg.tests.push_back(test);
    }

    for (const auto& s : j.at("scenarios")) {
      const std::string panel = s.value("panel", std::string("scenario"));
      const nlohmann::json structure = s.value("structure", nlohmann::json{{"type", "equicorrelated"}});
      const std::string type = lower(structure.value("type", std::string("equicorrelated")));
      std::vector<Departure> departures;
      if (s.contains("departures")) {
        for (const auto& dj : s.at("departures")) departures.push_back(departure_from_json(dj));
      } else {
        departures.push_back(departure_from_json(s.value("departure", nlohmann::json::object())));
      }
      std::vector<double> taus = type == "equicorrelated" ? as_list<double>(s, "tau") : std::vector<double>{0.0};
      for (const Departure& dep : departures) {
        for (double tau : taus) {
          for (int d : as_list<int>(s, "d")) {
            for (Index n : as_list<Index>(s, "n")) {
              ScenarioConfig sc;
              sc.n = n;
              sc.d = d;
              sc.departure = dep;
              std::ostringstream label;
              label << panel;
              if (type == "equicorrelated") {
                sc.structure = TauStructure::equicorrelated(tau);
                label << " | tau=" << tau;
              } else if (type == "block-balanced" || type == "block-unbalanced") {
                sc.structure = TauStructure::block_preset(d, type == "block-balanced");
                label << " | " << type;
              } else if (type == "block") {
                auto sizes = structure.at("sizes").get<std::vector<int>>();
                auto rows = structure.at("values").get<std::vector<std::vector<double>>>();
                Eigen::MatrixXd values(rows.size(), rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                  if (rows[r].size() != rows.size()) throw InvalidArgument("block values must be square");
                  for (std::size_t c = 0; c < rows.size(); ++c) values(r, c) = rows[r][c];
                }
                sc.structure = TauStructure::block(sizes, values);
                label << " | block";
              } else if (type == "custom") {
                auto rows = structure.at("matrix").get<std::vector<std::vector<double>>>();
                Eigen::MatrixXd T(rows.size(), rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                  if (rows[r].size() != rows.size()) throw InvalidArgument("custom matrix must be square");
                  for (std::size_t c = 0; c < rows.size(); ++c) T(r, c) = rows[r][c];
                }
                sc.structure = TauStructure::custom_matrix(T);
                label << " | custom";
              } else {
                throw InvalidArgument("unknown structure type '" + type + "'");
              }
              label << " | departure=" << departure_label(dep);
              sc.panel = label.str();
              // Validate once at build time: the Kendall matrix must map to a PD correlation.
              Eigen::MatrixXd T = build_tau_matrix(sc.d, sc.structure, sc.departure);
              Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(tau_to_pearson(T), Eigen::EigenvaluesOnly);
              if (!(eig.eigenvalues().minCoeff() > 1e-12)) {
                throw NotPositiveDefinite(eig.eigenvalues().minCoeff(),
                                          "scenario '" + sc.panel + "' with d=" + std::to_string(d) +
                                              " gives a correlation matrix that is not positive definite");
              }
              cfg.scenarios.push_back(sc);
            }
          }
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("study config: ") + e.what());
  }
  if (cfg.scenarios.empty()) throw InvalidArgument("study config has no scenarios");
  if (cfg.tests.empty()) throw InvalidArgument("study config has no tests");
  return cfg;
}

}  // namespace kstruct
