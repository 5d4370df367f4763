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

#ifndef PROTOFS_EMBEDDING_STORE_HPP_
#define PROTOFS_EMBEDDING_STORE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protofs/tensor.hpp"

namespace protofs {

/// Row-major float32 matrix of embeddings. Construction rejects a payload
/// whose length disagrees with rows x dim or that holds NaN/Inf.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data_).subspan(r * dim_, dim_);
  }

  Tensor to_tensor() const { return Tensor::matrix(rows_, dim_, data_); }
  static EmbeddingMatrix from_tensor(const Tensor& t);

  EmbeddingMatrix select_rows(std::span<const std::size_t> rows) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t k) const { return names_.at(k); }
  std::optional<std::size_t> index_of(const std::string& name) const;

 private:
  std::vector<std::string> names_;
};

/// Labeled support embeddings. Every class in [0, num_classes) owns at least
/// one row.
struct SupportSet {
  EmbeddingMatrix embeddings;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> per_class_counts;

  std::size_t num_classes() const noexcept { return per_class_counts.size(); }

  static SupportSet make(EmbeddingMatrix embeddings,
                         std::vector<std::size_t> labels,
                         std::size_t num_classes);
};

struct TextPromptBank {
  EmbeddingMatrix embeddings;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> per_class_counts;
  std::vector<std::string> prompt_texts;  // empty, or one per row

  static TextPromptBank make(EmbeddingMatrix embeddings,
                             std::vector<std::size_t> labels,
                             std::size_t num_classes,
                             std::vector<std::string> prompt_texts = {});
};

struct QuerySet {
  EmbeddingMatrix embeddings;
  std::optional<std::vector<std::size_t>> labels;

  bool labeled() const noexcept { return labels.has_value(); }

  static QuerySet make(EmbeddingMatrix embeddings,
                       std::optional<std::vector<std::size_t>> labels,
                       std::size_t num_classes);
};

struct Dataset {
  std::string name;
  ClassVocabulary vocab;
  SupportSet support;
  TextPromptBank text;
  QuerySet val;
  QuerySet test;
};

// --- PCE1 container -------------------------------------------------------
//
// "PCE1" | u32 rows | u32 dim | rows*dim float32, all little-endian.

inline constexpr char kContainerMagic[4] = {'P', 'C', 'E', '1'};
inline constexpr std::size_t kContainerHeaderBytes = 12;

std::string encode_container(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_container(std::string_view bytes);

void write_container(const EmbeddingMatrix& matrix,
                     const std::filesystem::path& path);
EmbeddingMatrix read_container(const std::filesystem::path& path);

// --- dataset manifest -----------------------------------------------------

struct ManifestSplit {
  std::string file;
  std::optional<std::vector<std::size_t>> labels;
  std::vector<std::string> prompts;  // text split only
};

struct DatasetManifest {
  std::string name;  // optional; defaults to the manifest directory name
  std::vector<std::string> classes;
  ManifestSplit support;
  ManifestSplit text;
  ManifestSplit val;
  ManifestSplit test;

  std::string to_json_string() const;
  static DatasetManifest parse(std::string_view json_text);
};

struct LoadOptions {
  bool normalize = true;
};

/// Loads and cross-validates a dataset.json and the containers it names.
/// Paths in the manifest are resolved relative to the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const LoadOptions& options = {});

/// Writes support/text/val/test containers and dataset.json into `dir`.
/// Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& dataset,
                                    const std::filesystem::path& dir);

// --- episodes -------------------------------------------------------------

struct EpisodeSpec {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::uint64_t seed = 0;
};

struct Episode {
  SupportSet support;                    // labels remapped to [0, n_way)
  std::vector<std::size_t> classes;      // episode class -> source class
  std::vector<std::size_t> source_rows;  // episode row -> source row
};

/// Draws n_way classes (all of them, in order, when n_way equals the class
/// count) and k_shot rows per class without replacement.
Episode sample_episode(const SupportSet& full_support, const EpisodeSpec& spec);

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& matrix);

}  // namespace protofs

#endif  // PROTOFS_EMBEDDING_STORE_HPP_
