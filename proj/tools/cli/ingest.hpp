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
#ifndef PROTOFS_TOOLS_CLI_INGEST_HPP_
#define PROTOFS_TOOLS_CLI_INGEST_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protofs/embedding_store.hpp"

namespace protofs::cli {

struct LabeledRows {
  EmbeddingMatrix matrix;
  std::optional<std::vector<std::size_t>> labels;
};

/// CSV with header `label,d0,...,d{C-1}`. A label is a class name or a
/// class index. A file whose label cells are all empty is unlabeled.
LabeledRows read_csv_rows(const std::filesystem::path& path, const ClassVocabulary& vocab);

/// One label per line, resolved like CSV labels.
std::vector<std::size_t> read_label_list(const std::filesystem::path& path,
                                         const ClassVocabulary& vocab);

/// Non-empty lines of a text file, trailing CR removed.
std::vector<std::string> read_lines(const std::filesystem::path& path, bool keep_empty = false);

/// Reads a CSV file or a PCE1 container (detected by magic). `labels` names
/// a label list and is only accepted for containers.
LabeledRows read_split(const std::filesystem::path& path,
                       const std::optional<std::filesystem::path>& labels,
                       const ClassVocabulary& vocab);

struct IngestSources {
  std::string name;
  std::filesystem::path classes;
  std::filesystem::path support, text, val, test;
  std::optional<std::filesystem::path> support_labels, text_labels, val_labels, test_labels;
  std::optional<std::filesystem::path> prompts;
};

/// Reads, cross-checks and L2-normalizes every split.
Dataset build_dataset(const IngestSources& sources);

}  // namespace protofs::cli

#endif  // PROTOFS_TOOLS_CLI_INGEST_HPP_
