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

#ifndef PROTOFS_MODEL_HPP_
#define PROTOFS_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "protofs/diffmath.hpp"
#include "protofs/embedding_store.hpp"
#include "protofs/tensor.hpp"

namespace protofs {

enum class AdapterKind { kIdentity, kMlp, kConv2, kConv3 };

std::string_view to_string(AdapterKind kind);
AdapterKind parse_adapter_kind(std::string_view text);

inline constexpr double kDefaultResidualRatio = 0.2;
inline constexpr std::size_t kMlpBottleneck = 4;
inline constexpr std::size_t kConvChannels = 32;

/// Query adapter weights.
///
/// Layouts by kind:
///   Identity: no weights.
///   Mlp:      W1 [C, C/4], b1 [C/4], W2 [C/4, C], b2 [C]; ReLU between.
///   Conv2:    K1 [32, 1, 3, 3], b1 [32], K2 [1, 32, 3, 3], b2 [1].
///   Conv3:    K1 [32, 1, 3, 3], b1 [32], K2 [32, 32, 3, 3], b2 [32],
///             K3 [1, 32, 3, 3], b3 [1].
/// Conv kinds view the C-vector as a one-channel sqrt(C) x sqrt(C) grid.
struct AdapterParams {
  AdapterKind kind = AdapterKind::kIdentity;
  std::size_t dim = 0;
  double residual_ratio = kDefaultResidualRatio;
  std::vector<Tensor> weights;

  static std::vector<Shape> weight_shapes(AdapterKind kind, std::size_t dim);
};

/// Learnable per-example memories. Row layout and labels are fixed at
/// construction; only the values change during training.
struct MemoryBank {
  Tensor image_memory;  // [M, C]
  Tensor text_memory;   // [M~, C]
  std::vector<std::size_t> image_labels;
  std::vector<std::size_t> text_labels;
  std::size_t num_classes = 0;
  bool train_image = true;
  bool train_text = false;
};

struct MixtureHyperparams {
  double alpha = 0.5;
  double beta = 1.0;

  void validate() const;
};

struct PrototypeModel {
  MemoryBank bank;
  AdapterParams adapter;

  std::size_t dim() const { return bank.image_memory.cols(); }
  std::size_t num_classes() const { return bank.num_classes; }
};

struct PrototypeSet {
  Tensor image;  // [N, C], per-class mean of image memory rows
  Tensor text;   // [N, C], per-class mean of text memory rows
};

struct ModalityProbs {
  Tensor image;  // [L, N]
  Tensor text;   // [L, N]
};

struct Classification {
  Tensor probs;  // [L, N]
  std::vector<std::size_t> labels;
};

/// Copies the embeddings into fresh memories and draws adapter weights from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with zero biases.
PrototypeModel init_model(const SupportSet& support,
                          const TextPromptBank& prompts, AdapterKind kind,
                          bool train_text, std::uint64_t seed,
                          double residual_ratio = kDefaultResidualRatio);

/// Identity returns the queries untouched. Other kinds return
/// normalize(r * f(x) + (1 - r) * x) row-wise.
Tensor adapt_query(const AdapterParams& params, const Tensor& queries);

PrototypeSet compute_prototypes(const MemoryBank& bank);

ModalityProbs modality_probs(const PrototypeSet& protos, const Tensor& adapted,
                             double beta);

// softmax(-beta * distances), row-wise.
Tensor probs_from_distances(const Tensor& sq_distances, double beta);

Tensor mix_probabilities(const Tensor& p_image, const Tensor& p_text,
                         double alpha);

/// Row-wise argmax; ties go to the lowest class index.
std::vector<std::size_t> argmax_rows(const Tensor& probs);

Classification classify(const PrototypeSet& protos, const Tensor& adapted,
                        const MixtureHyperparams& hp);

/// Adapts raw queries and classifies them against the model's prototypes.
Classification classify_queries(const PrototypeModel& model,
                                const Tensor& queries,
                                const MixtureHyperparams& hp);

/// CSV with header `class,modality,d0,...,d{C-1}`; image rows then text rows.
void export_prototypes(const PrototypeSet& protos, const ClassVocabulary& vocab,
                       const std::filesystem::path& path);
std::string prototypes_csv(const PrototypeSet& protos,
                           const ClassVocabulary& vocab);

// Shortest decimal text that reads back to the same float.
std::string format_float(float value);

// Quotes a CSV field when it holds a comma, quote or line break.
std::string csv_field(std::string_view s);

namespace graph {

struct ModelVars {
  ad::Var image_memory;
  ad::Var text_memory;
  std::vector<ad::Var> adapter;
};

struct PrototypeVars {
  ad::Var image;
  ad::Var text;
};

struct ModalityVars {
  ad::Var image;
  ad::Var text;
};

/// Places the model's parameters on `tape`. With `trainable`, image memory
/// and adapter weights require gradients; text memory does iff
/// bank.train_text.
ModelVars bind_model(ad::Tape& tape, const PrototypeModel& model,
                     bool trainable);

ad::Var adapt_query(const AdapterParams& params,
                    std::span<const ad::Var> weights, ad::Var queries);
PrototypeVars compute_prototypes(const MemoryBank& bank, ad::Var image_memory,
                                 ad::Var text_memory);
ModalityVars modality_probs(const PrototypeVars& protos, ad::Var adapted,
                            double beta);
ad::Var mix_probabilities(const ModalityVars& probs, double alpha);

}  // namespace graph

}  // namespace protofs

#endif  // PROTOFS_MODEL_HPP_
