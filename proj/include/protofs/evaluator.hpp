/* Copyright 2026 The protofs Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PROTOFS_EVALUATOR_HPP_
#define PROTOFS_EVALUATOR_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protofs/embedding_store.hpp"
#include "protofs/model.hpp"

namespace protofs {

// Echo of the settings that produced a report.
struct ReportConfig {
  std::string dataset;
  std::string split = "test";
  std::string variant = "training-free";
  std::string adapter = "identity";
  std::string losses;
  bool train_text = false;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
};

struct EvalReport {
  double overall_accuracy = 0.0;
  std::size_t num_queries = 0;
  // Empty optional for classes without any query.
  std::vector<std::optional<double>> per_class_accuracy;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::string> class_names;
  ReportConfig config;

  std::string to_json_string() const;
  static EvalReport parse_json(std::string_view text);

  /// One row of the aggregate table produced by report_table().
  std::string markdown_row() const;
};

/// Classifies every labeled query and tallies accuracy and confusion.
/// `config.alpha` / `config.beta` are overwritten with `hp`.
EvalReport evaluate(const PrototypeModel& model, const QuerySet& queries,
                    const MixtureHyperparams& hp,
                    std::span<const std::string> class_names = {},
                    ReportConfig config = {});

/// Builds a table with one row per (shots, variant) and one accuracy column
/// per dataset, in percent with two decimals.
std::string report_table(std::span<const EvalReport> reports);

}  // namespace protofs

#endif  // PROTOFS_EVALUATOR_HPP_
