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
#ifndef PROTOFS_TOOLS_CLI_COMMANDS_HPP_
#define PROTOFS_TOOLS_CLI_COMMANDS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cli/ingest.hpp"

namespace protofs::cli {

using Args = std::vector<std::string>;

struct IngestOptions {
  IngestSources sources;
  std::filesystem::path out;
  std::filesystem::path run_manifest;
};

struct EvalOptions {
  std::string data;
  std::string variant = "training-free";
  std::filesystem::path checkpoint;
  std::optional<double> alpha, beta;
  bool search = false;
  std::string split = "test";
  std::optional<std::size_t> shots;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::filesystem::path out;
  std::filesystem::path markdown;
  std::filesystem::path run_manifest;
};

struct TrainOptions {
  std::string data;
  std::filesystem::path out;
  std::string adapter = "mlp";
  std::string train_text = "false";
  std::string losses = "l1,l2,l3";
  std::optional<std::size_t> shots;
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  std::size_t batch_size = 0;
  double residual_ratio = 0.2;
  std::optional<double> alpha, beta;
  std::optional<std::string> search;  // none | before | after | both
  std::size_t threads = 1;
  std::filesystem::path run_manifest;
};

struct SearchOptions {
  std::string data;
  std::filesystem::path checkpoint;
  std::optional<std::size_t> shots;
  std::optional<std::uint64_t> seed;
  std::vector<double> alphas, betas;
  std::size_t threads = 1;
  std::filesystem::path out;
  std::filesystem::path best_out;
  std::filesystem::path run_manifest;
};

struct PredictOptions {
  std::string data;
  std::filesystem::path checkpoint;
  std::filesystem::path queries;
  std::optional<double> alpha, beta;
  std::filesystem::path out;
  std::filesystem::path run_manifest;
};

struct ExportOptions {
  std::string data;
  std::filesystem::path checkpoint;
  std::optional<std::size_t> shots;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  std::filesystem::path run_manifest;
};

struct ReportOptions {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out;
  std::filesystem::path run_manifest;
};

struct SynthOptions {
  std::filesystem::path out;
  std::string name;
  std::uint64_t seed = 0;
  std::size_t classes = 5;
  std::size_t dim = 64;
  std::size_t shots = 4;
  std::size_t val_per_class = 4;
  std::size_t test_per_class = 8;
  std::size_t prompts_per_class = 2;
  double sigma = 0.01;
  double min_center_distance = 1.0;
  double text_alignment = 0.3;
  bool text_noise = false;
  std::filesystem::path run_manifest;
};

// Each command receives its own argument list for the run manifest.
void cmd_ingest(const IngestOptions& o, const Args& args);
void cmd_eval(const EvalOptions& o, const Args& args);
void cmd_train(const TrainOptions& o, const Args& args);
void cmd_search(const SearchOptions& o, const Args& args);
void cmd_predict(const PredictOptions& o, const Args& args);
void cmd_export(const ExportOptions& o, const Args& args);
void cmd_report(const ReportOptions& o, const Args& args);
void cmd_synth(const SynthOptions& o, const Args& args);

}  // namespace protofs::cli

#endif  // PROTOFS_TOOLS_CLI_COMMANDS_HPP_
