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

#include "protofs/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "protofs/error.hpp"
#include "protofs/random.hpp"

namespace protofs {
namespace {

using nlohmann::json;

void check_finite(std::span<const float> data, const char* what) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::kNonFinite, std::string(what) +
                                             ": non-finite value at index " +
                                             std::to_string(i));
    }
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i]))
         << (8 * i);
  }
  return v;
}

std::vector<std::size_t> count_labels(std::span<const std::size_t> labels,
                                      std::size_t num_classes,
                                      const char* what) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  std::string(what) + ": row " + std::to_string(i) +
                      " has label " + std::to_string(labels[i]) +
                      " but there are " + std::to_string(num_classes) +
                      " classes");
    }
    ++counts[labels[i]];
  }
  return counts;
}

void require_label_count(std::size_t rows, std::size_t labels,
                         const char* what) {
  if (rows != labels) {
    throw Error(ErrorCode::kBadManifest,
                std::string(what) + ": " + std::to_string(rows) +
                    " rows but " + std::to_string(labels) + " labels");
  }
}

void require_no_empty_class(std::span<const std::size_t> counts,
                            const char* what) {
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw Error(ErrorCode::kEmptyClass, std::string(what) + ": class " +
                                              std::to_string(k) +
                                              " has no rows");
    }
  }
}

}  // namespace

// --- EmbeddingMatrix ------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim,
                                 std::vector<float> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
  if (data_.size() != rows_ * dim_) {
    throw Error(ErrorCode::kShapeMismatch,
                "embedding matrix " + std::to_string(rows_) + "x" +
                    std::to_string(dim_) + " given " +
                    std::to_string(data_.size()) + " values");
  }
  check_finite(data_, "embedding matrix");
}

EmbeddingMatrix EmbeddingMatrix::from_tensor(const Tensor& t) {
  if (t.rank() != 2) {
    throw Error(ErrorCode::kShapeMismatch,
                "embedding matrix needs a rank-2 tensor, got " +
                    shape_string(t.shape()));
  }
  return EmbeddingMatrix(t.rows(), t.cols(), t.values());
}

EmbeddingMatrix EmbeddingMatrix::select_rows(
    std::span<const std::size_t> rows) const {
  std::vector<float> out;
  out.reserve(rows.size() * dim_);
  for (std::size_t r : rows) {
    if (r >= rows_) {
      throw Error(ErrorCode::kInvalidArgument,
                  "row " + std::to_string(r) + " out of range");
    }
    const auto src = row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return EmbeddingMatrix(rows.size(), dim_, std::move(out));
}

// --- ClassVocabulary ------------------------------------------------------

ClassVocabulary::ClassVocabulary(std::vector<std::string> names)
    : names_(std::move(names)) {
  if (names_.size() < 2) {
    throw Error(ErrorCode::kBadManifest, "at least two classes are required");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error(ErrorCode::kBadManifest, "empty class name");
    if (!seen.insert(n).second) {
      throw Error(ErrorCode::kBadManifest, "duplicate class name '" + n + "'");
    }
  }
}

std::optional<std::size_t> ClassVocabulary::index_of(
    const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

// --- labeled sets ---------------------------------------------------------

SupportSet SupportSet::make(EmbeddingMatrix embeddings,
                            std::vector<std::size_t> labels,
                            std::size_t num_classes) {
  require_label_count(embeddings.rows(), labels.size(), "support");
  auto counts = count_labels(labels, num_classes, "support");
  require_no_empty_class(counts, "support");
  return SupportSet{std::move(embeddings), std::move(labels), std::move(counts)};
}

TextPromptBank TextPromptBank::make(EmbeddingMatrix embeddings,
                                    std::vector<std::size_t> labels,
                                    std::size_t num_classes,
                                    std::vector<std::string> prompt_texts) {
  require_label_count(embeddings.rows(), labels.size(), "text");
  if (!prompt_texts.empty() && prompt_texts.size() != embeddings.rows()) {
    throw Error(ErrorCode::kBadManifest,
                "text: " + std::to_string(prompt_texts.size()) +
                    " prompt strings for " + std::to_string(embeddings.rows()) +
                    " rows");
  }
  auto counts = count_labels(labels, num_classes, "text");
  require_no_empty_class(counts, "text");
  return TextPromptBank{std::move(embeddings), std::move(labels),
                        std::move(counts), std::move(prompt_texts)};
}

QuerySet QuerySet::make(EmbeddingMatrix embeddings,
                        std::optional<std::vector<std::size_t>> labels,
                        std::size_t num_classes) {
  if (labels) {
    require_label_count(embeddings.rows(), labels->size(), "query");
    count_labels(*labels, num_classes, "query");
  }
  return QuerySet{std::move(embeddings), std::move(labels)};
}

// --- PCE1 container -------------------------------------------------------

std::string encode_container(const EmbeddingMatrix& matrix) {
  check_finite(matrix.data(), "write_container");
  if (matrix.rows() > UINT32_MAX || matrix.dim() > UINT32_MAX) {
    throw Error(ErrorCode::kInvalidArgument, "matrix too large for PCE1");
  }
  std::string out(kContainerMagic, sizeof(kContainerMagic));
  out.reserve(kContainerHeaderBytes + matrix.data().size() * 4);
  put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
  put_u32(out, static_cast<std::uint32_t>(matrix.dim()));
  for (float v : matrix.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

EmbeddingMatrix decode_container(std::string_view bytes) {
  if (bytes.size() < sizeof(kContainerMagic)) {
    throw Error(ErrorCode::kTruncated, "container shorter than its magic");
  }
  if (!std::equal(std::begin(kContainerMagic), std::end(kContainerMagic),
                  bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, "container does not start with PCE1");
  }
  if (bytes.size() < kContainerHeaderBytes) {
    throw Error(ErrorCode::kTruncated, "container header is incomplete");
  }
  const std::size_t rows = get_u32(bytes, 4);
  const std::size_t dim = get_u32(bytes, 8);
  const std::size_t expected = kContainerHeaderBytes + rows * dim * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kTruncated,
                "container declares " + std::to_string(rows) + "x" +
                    std::to_string(dim) + " (" + std::to_string(expected) +
                    " bytes) but holds " + std::to_string(bytes.size()));
  }
  std::vector<float> data(rows * dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, kContainerHeaderBytes + 4 * i));
  }
  check_finite(data, "read_container");
  return EmbeddingMatrix(rows, dim, std::move(data));
}

void write_container(const EmbeddingMatrix& matrix,
                     const std::filesystem::path& path) {
  const std::string bytes = encode_container(matrix);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

EmbeddingMatrix read_container(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  try {
    return decode_container(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// --- manifest -------------------------------------------------------------

namespace {

json split_to_json(const ManifestSplit& split, bool with_prompts) {
  json j;
  j["file"] = split.file;
  if (split.labels) j["labels"] = *split.labels;
  if (with_prompts && !split.prompts.empty()) j["prompts"] = split.prompts;
  return j;
}

ManifestSplit split_from_json(const json& root, const char* key) {
  if (!root.contains(key) || !root[key].is_object()) {
    throw Error(ErrorCode::kBadManifest,
                std::string("manifest is missing the '") + key + "' split");
  }
  const json& j = root[key];
  ManifestSplit split;
  if (!j.contains("file") || !j["file"].is_string()) {
    throw Error(ErrorCode::kBadManifest,
                std::string("split '") + key + "' has no file");
  }
  split.file = j["file"].get<std::string>();
  if (j.contains("labels") && !j["labels"].is_null()) {
    split.labels = std::vector<std::size_t>{};
    for (const json& v : j["labels"]) {
      if (!v.is_number_unsigned()) {
        throw Error(ErrorCode::kBadManifest,
                    std::string("split '") + key +
                        "' has a non-integer or negative label");
      }
      split.labels->push_back(v.get<std::size_t>());
    }
  }
  if (j.contains("prompts")) {
    split.prompts = j["prompts"].get<std::vector<std::string>>();
  }
  return split;
}

}  // namespace

std::string DatasetManifest::to_json_string() const {
  json j;
  if (!name.empty()) j["name"] = name;
  j["classes"] = classes;
  j["support"] = split_to_json(support, false);
  j["text"] = split_to_json(text, true);
  j["val"] = split_to_json(val, false);
  j["test"] = split_to_json(test, false);
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::parse(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadManifest, e.what());
  }
  if (!root.is_object()) {
    throw Error(ErrorCode::kBadManifest, "manifest must be a JSON object");
  }
  DatasetManifest m;
  try {
    if (root.contains("name")) m.name = root["name"].get<std::string>();
    if (!root.contains("classes")) {
      throw Error(ErrorCode::kBadManifest, "manifest has no 'classes'");
    }
    m.classes = root["classes"].get<std::vector<std::string>>();
    m.support = split_from_json(root, "support");
    m.text = split_from_json(root, "text");
    m.val = split_from_json(root, "val");
    m.test = split_from_json(root, "test");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadManifest, e.what());
  }
  if (!m.support.labels) {
    throw Error(ErrorCode::kBadManifest, "support split needs labels");
  }
  if (!m.text.labels) {
    throw Error(ErrorCode::kBadManifest, "text split needs labels");
  }
  return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const LoadOptions& options) {
  if (!std::filesystem::exists(manifest_path)) {
    throw Error(ErrorCode::kMissingFile, manifest_path.string());
  }
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + manifest_path.string());
  std::stringstream text;
  text << in.rdbuf();
  const DatasetManifest manifest = DatasetManifest::parse(text.str());

  const std::filesystem::path root = manifest_path.parent_path();
  auto load = [&](const ManifestSplit& split) {
    return read_container(root / split.file);
  };
  EmbeddingMatrix support = load(manifest.support);
  EmbeddingMatrix prompts = load(manifest.text);
  EmbeddingMatrix val = load(manifest.val);
  EmbeddingMatrix test = load(manifest.test);

  const std::size_t dim = support.dim();
  const std::pair<const char*, const EmbeddingMatrix*> others[] = {
      {"text", &prompts}, {"val", &val}, {"test", &test}};
  for (const auto& [what, m] : others) {
    // An empty query split carries no dimension worth checking.
    if (m->rows() == 0 && std::string_view(what) != "text") continue;
    if (m->dim() != dim) {
      throw Error(ErrorCode::kDimMismatch,
                  std::string(what) + " embeddings have dim " +
                      std::to_string(m->dim()) + " but support has dim " +
                      std::to_string(dim));
    }
  }

  ClassVocabulary vocab(manifest.classes);
  const std::size_t n = vocab.size();
  if (options.normalize) {
    support = l2_normalize_rows(support);
    prompts = l2_normalize_rows(prompts);
    val = l2_normalize_rows(val);
    test = l2_normalize_rows(test);
  }

  auto query_labels = [](const ManifestSplit& split)
      -> std::optional<std::vector<std::size_t>> {
    if (!split.labels || split.labels->empty()) return std::nullopt;
    return split.labels;
  };

  Dataset ds;
  ds.name = manifest.name.empty() ? std::filesystem::absolute(root).filename().string()
                                  : manifest.name;
  ds.support = SupportSet::make(std::move(support), *manifest.support.labels, n);
  ds.text = TextPromptBank::make(std::move(prompts), *manifest.text.labels, n,
                                 manifest.text.prompts);
  auto val_labels = query_labels(manifest.val);
  auto test_labels = query_labels(manifest.test);
  if (val_labels && val.rows() == 0) val_labels.reset();
  if (test_labels && test.rows() == 0) test_labels.reset();
  ds.val = QuerySet::make(std::move(val), std::move(val_labels), n);
  ds.test = QuerySet::make(std::move(test), std::move(test_labels), n);
  ds.vocab = std::move(vocab);
  return ds;
}

std::filesystem::path write_dataset(const Dataset& dataset,
                                    const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  DatasetManifest m;
  m.name = dataset.name;
  m.classes = dataset.vocab.names();
  m.support = {"support.pce", dataset.support.labels, {}};
  m.text = {"text.pce", dataset.text.labels, dataset.text.prompt_texts};
  m.val = {"val.pce", dataset.val.labels, {}};
  m.test = {"test.pce", dataset.test.labels, {}};
  write_container(dataset.support.embeddings, dir / m.support.file);
  write_container(dataset.text.embeddings, dir / m.text.file);
  write_container(dataset.val.embeddings, dir / m.val.file);
  write_container(dataset.test.embeddings, dir / m.test.file);
  const auto manifest_path = dir / "dataset.json";
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + manifest_path.string());
  out << m.to_json_string();
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + manifest_path.string());
  return manifest_path;
}

// --- episodes -------------------------------------------------------------

Episode sample_episode(const SupportSet& full_support, const EpisodeSpec& spec) {
  const std::size_t n = full_support.num_classes();
  if (spec.k_shot < 1 || spec.n_way < 2 || spec.n_way > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "episode needs k_shot >= 1 and 2 <= n_way <= " +
                    std::to_string(n));
  }
  Rng rng(spec.seed);

  std::vector<std::size_t> classes(n);
  for (std::size_t k = 0; k < n; ++k) classes[k] = k;
  if (spec.n_way < n) {
    rng.shuffle(classes.begin(), classes.end());
    classes.resize(spec.n_way);
    std::sort(classes.begin(), classes.end());
  }

  std::vector<std::vector<std::size_t>> rows_by_class(n);
  for (std::size_t i = 0; i < full_support.labels.size(); ++i) {
    rows_by_class[full_support.labels[i]].push_back(i);
  }

  Episode ep;
  ep.classes = classes;
  std::vector<std::size_t> labels;
  for (std::size_t e = 0; e < classes.size(); ++e) {
    auto& pool = rows_by_class[classes[e]];
    if (pool.size() < spec.k_shot) {
      throw Error(ErrorCode::kNotEnoughShots,
                  "class " + std::to_string(classes[e]) + " has " +
                      std::to_string(pool.size()) + " rows, need " +
                      std::to_string(spec.k_shot));
    }
    rng.shuffle(pool.begin(), pool.end());
    std::vector<std::size_t> chosen(pool.begin(), pool.begin() + spec.k_shot);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t r : chosen) {
      ep.source_rows.push_back(r);
      labels.push_back(e);
    }
  }
  ep.support = SupportSet::make(full_support.embeddings.select_rows(ep.source_rows),
                                std::move(labels), classes.size());
  return ep;
}

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& matrix) {
  std::vector<float> out(matrix.data().begin(), matrix.data().end());
  const std::size_t dim = matrix.dim();
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = out[r * dim + j];
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0)) {
      throw Error(ErrorCode::kZeroNormRow,
                  "row " + std::to_string(r) + " has zero norm");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      out[r * dim + j] = static_cast<float>(out[r * dim + j] / norm);
    }
  }
  return EmbeddingMatrix(matrix.rows(), dim, std::move(out));
}

}  // namespace protofs
