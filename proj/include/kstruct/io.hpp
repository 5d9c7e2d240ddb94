// Copyright 2026 The kstruct Authors
// SPDX-License-Identifier: Apache-2.0
//
// File formats: datasets and design matrices are comma-separated with dot
// decimals; a first row that does not parse as numbers is treated as a
// header. Partitions are JSON {"d": int, "groups": [[int, ...], ...]} with
// 1-based variable indices.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "json.hpp"
#include "kstruct/indexing.hpp"
#include "kstruct/kendall.hpp"
#include "kstruct/simulation.hpp"
#include "kstruct/testing.hpp"

namespace kstruct {

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  Eigen::MatrixXd values;
};

CsvTable read_csv(const std::string& path);
// columns: 1-based selection; empty keeps all.
Dataset read_dataset_csv(const std::string& path, const std::vector<int>& columns = {},
                         std::vector<std::string>* names = nullptr);
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& header = {});

Partition read_partition_json(const std::string& path);
Partition partition_from_json(const nlohmann::json& j);
DesignMatrix read_design_csv(const std::string& path);

// 64-bit FNV-1a digest of the file bytes, as 16 hex digits.
std::string file_digest(const std::string& path);
std::string text_digest(const std::string& text);

Statistic parse_statistic(const std::string& s);
Weighting parse_weighting(const std::string& s);
StudyHypothesis parse_study_hypothesis(const std::string& s);

nlohmann::json report_to_json(const TestReport& report);

// Study configuration: see README for the schema. desk_scale caps
// repetitions at 1000 and Monte Carlo replicates at 2000.
StudyConfig study_config_from_json(const nlohmann::json& j, bool desk_scale = false);

}  // namespace kstruct
