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
#include "cli/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "cli/run_context.hpp"
#include "protofs/error.hpp"

namespace protofs::cli {
namespace {

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

// Splits one CSV record; quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv(const std::string& line, const fs::path& path,
                                   std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"' && fields.back().empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw Error(ErrorCode::kBadManifest, where(path, line_no) + "unterminated quote");
  return fields;
}

std::size_t resolve_label(const std::string& text, const ClassVocabulary& vocab,
                          const std::string& context) {
  if (auto k = vocab.index_of(text)) return *k;
  std::size_t k = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
  if (ec == std::errc() && end == text.data() + text.size() && !text.empty()) {
    if (k < vocab.size()) return k;
  }
  throw Error(ErrorCode::kLabelOutOfRange,
              context + "label '" + text + "' is neither a class name nor an index below " +
                  std::to_string(vocab.size()));
}

float parse_value(const std::string& text, const std::string& context) {
  float v = 0.0f;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  const auto [end, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::result_out_of_range) {
    throw Error(ErrorCode::kNonFinite, context + "value '" + text + "' overflows float32");
  }
  if (ec != std::errc() || end != last || first == last) {
    throw Error(ErrorCode::kBadManifest, context + "malformed number '" + text + "'");
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, context + "non-finite value");
  return v;
}

template <typename F>
auto with_context(const std::string& context, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), context + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> read_lines(const fs::path& path, bool keep_empty) {
  const std::string text = read_text(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (keep_empty || !line.empty()) lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

LabeledRows read_csv_rows(const fs::path& path, const ClassVocabulary& vocab) {
  const std::vector<std::string> lines = read_lines(path, /*keep_empty=*/true);
  std::size_t count = lines.size();
  while (count > 0 && lines[count - 1].empty()) --count;
  if (count == 0) throw Error(ErrorCode::kBadManifest, path.string() + ": empty CSV file");

  const auto header = split_csv(lines[0], path, 1);
  if (header.size() < 2 || header[0] != "label") {
    throw Error(ErrorCode::kBadManifest,
                where(path, 1) + "header must be label,d0,...,d{C-1}");
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t c = 0; c < dim; ++c) {
    if (header[c + 1] != "d" + std::to_string(c)) {
      throw Error(ErrorCode::kBadManifest, where(path, 1) + "expected column d" +
                                               std::to_string(c) + ", found '" +
                                               header[c + 1] + "'");
    }
  }

  std::vector<float> data;
  data.reserve((count - 1) * dim);
  std::vector<std::size_t> labels;
  std::size_t unlabeled = 0;
  for (std::size_t i = 1; i < count; ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = split_csv(lines[i], path, line_no);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kShapeMismatch, where(path, line_no) + "expected " +
                                                 std::to_string(header.size()) +
                                                 " fields, found " +
                                                 std::to_string(fields.size()));
    }
    if (fields[0].empty()) {
      ++unlabeled;
    } else {
      labels.push_back(resolve_label(fields[0], vocab, where(path, line_no)));
    }
    for (std::size_t c = 0; c < dim; ++c) {
      data.push_back(parse_value(fields[c + 1], where(path, line_no)));
    }
  }
  const std::size_t rows = count - 1;
  if (unlabeled != 0 && unlabeled != rows) {
    throw Error(ErrorCode::kBadManifest, path.string() + ": " + std::to_string(unlabeled) +
                                             " of " + std::to_string(rows) +
                                             " rows have no label");
  }
  LabeledRows out{EmbeddingMatrix(rows, dim, std::move(data)), std::nullopt};
  if (unlabeled == 0) out.labels = std::move(labels);
  return out;
}

std::vector<std::size_t> read_label_list(const fs::path& path, const ClassVocabulary& vocab) {
  const auto lines = read_lines(path, /*keep_empty=*/true);
  std::size_t count = lines.size();
  while (count > 0 && lines[count - 1].empty()) --count;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < count; ++i) {
    labels.push_back(resolve_label(lines[i], vocab, where(path, i + 1)));
  }
  return labels;
}

LabeledRows read_split(const fs::path& path, const std::optional<fs::path>& labels,
                       const ClassVocabulary& vocab) {
  char magic[4] = {};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kMissingFile, path.string());
    in.read(magic, 4);
  }
  if (std::equal(magic, magic + 4, kContainerMagic)) {
    LabeledRows out{read_container(path), std::nullopt};
    if (labels) {
      out.labels = read_label_list(*labels, vocab);
      if (out.labels->size() != out.matrix.rows()) {
        throw Error(ErrorCode::kShapeMismatch,
                    labels->string() + ": " + std::to_string(out.labels->size()) +
                        " labels for " + std::to_string(out.matrix.rows()) + " rows in " +
                        path.string());
      }
    }
    return out;
  }
  if (labels) {
    throw UsageError(path.string() + " is CSV and carries its own labels; drop " +
                     labels->string());
  }
  return read_csv_rows(path, vocab);
}

Dataset build_dataset(const IngestSources& src) {
  Dataset ds;
  ds.name = src.name;
  ds.vocab = with_context(src.classes.string(),
                          [&] { return ClassVocabulary(read_lines(src.classes)); });
  const std::size_t n = ds.vocab.size();

  LabeledRows support = read_split(src.support, src.support_labels, ds.vocab);
  LabeledRows text = read_split(src.text, src.text_labels, ds.vocab);
  LabeledRows val = read_split(src.val, src.val_labels, ds.vocab);
  LabeledRows test = read_split(src.test, src.test_labels, ds.vocab);

  const std::size_t dim = support.matrix.dim();
  const std::pair<const LabeledRows*, const fs::path*> others[] = {
      {&text, &src.text}, {&val, &src.val}, {&test, &src.test}};
  for (const auto& [rows, path] : others) {
    if (rows->matrix.dim() != dim) {
      throw Error(ErrorCode::kDimMismatch,
                  path->string() + " has dim " + std::to_string(rows->matrix.dim()) + " but " +
                      src.support.string() + " has dim " + std::to_string(dim));
    }
  }
  if (!support.labels) {
    throw Error(ErrorCode::kNoLabels, src.support.string() + ": support rows need labels");
  }
  if (!text.labels) {
    throw Error(ErrorCode::kNoLabels, src.text.string() + ": text rows need labels");
  }

  std::vector<std::string> prompts;
  if (src.prompts) {
    prompts = read_lines(*src.prompts, /*keep_empty=*/true);
    while (!prompts.empty() && prompts.back().empty()) prompts.pop_back();
  }

  auto normalized = [](const LabeledRows& r, const fs::path& path) {
    return with_context(path.string(), [&] { return l2_normalize_rows(r.matrix); });
  };
  ds.support = with_context(src.support.string(), [&] {
    return SupportSet::make(normalized(support, src.support), *support.labels, n);
  });
  ds.text = with_context(src.text.string(), [&] {
    return TextPromptBank::make(normalized(text, src.text), *text.labels, n, prompts);
  });
  ds.val = with_context(src.val.string(),
                        [&] { return QuerySet::make(normalized(val, src.val), val.labels, n); });
  ds.test = with_context(src.test.string(), [&] {
    return QuerySet::make(normalized(test, src.test), test.labels, n);
  });
  return ds;
}

}  // namespace protofs::cli
