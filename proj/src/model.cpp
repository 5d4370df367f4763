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

#include "protofs/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "protofs/error.hpp"
#include "protofs/random.hpp"

namespace protofs {
namespace {

std::size_t grid_side(std::size_t dim) {
  auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  while (side * side > dim) --side;
  while ((side + 1) * (side + 1) <= dim) ++side;
  if (side * side != dim || dim == 0) {
    throw Error(ErrorCode::kDimNotSquare,
                "conv adapters need a square embedding dim, got " +
                    std::to_string(dim));
  }
  return side;
}

bool is_conv(AdapterKind kind) {
  return kind == AdapterKind::kConv2 || kind == AdapterKind::kConv3;
}

}  // namespace

std::string_view to_string(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::kIdentity: return "identity";
    case AdapterKind::kMlp: return "mlp";
    case AdapterKind::kConv2: return "conv2";
    case AdapterKind::kConv3: return "conv3";
  }
  return "identity";
}

AdapterKind parse_adapter_kind(std::string_view text) {
  if (text == "identity") return AdapterKind::kIdentity;
  if (text == "mlp") return AdapterKind::kMlp;
  if (text == "conv2") return AdapterKind::kConv2;
  if (text == "conv3") return AdapterKind::kConv3;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown adapter kind '" + std::string(text) + "'");
}

std::vector<Shape> AdapterParams::weight_shapes(AdapterKind kind,
                                                std::size_t dim) {
  const std::size_t ch = kConvChannels;
  switch (kind) {
    case AdapterKind::kIdentity:
      return {};
    case AdapterKind::kMlp: {
      const std::size_t hidden = dim / kMlpBottleneck;
      if (hidden == 0) {
        throw Error(ErrorCode::kInvalidArgument,
                    "mlp adapter needs dim >= " + std::to_string(kMlpBottleneck));
      }
      return {{dim, hidden}, {hidden}, {hidden, dim}, {dim}};
    }
    case AdapterKind::kConv2:
      grid_side(dim);
      return {{ch, 1, 3, 3}, {ch}, {1, ch, 3, 3}, {1}};
    case AdapterKind::kConv3:
      grid_side(dim);
      return {{ch, 1, 3, 3}, {ch}, {ch, ch, 3, 3}, {ch}, {1, ch, 3, 3}, {1}};
  }
  return {};
}

void MixtureHyperparams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidArgument,
                "beta must be positive, got " + std::to_string(beta));
  }
}

PrototypeModel init_model(const SupportSet& support,
                          const TextPromptBank& prompts, AdapterKind kind,
                          bool train_text, std::uint64_t seed,
                          double residual_ratio) {
  const std::size_t dim = support.embeddings.dim();
  if (prompts.embeddings.dim() != dim) {
    throw Error(ErrorCode::kDimMismatch,
                "support dim " + std::to_string(dim) + " vs prompt dim " +
                    std::to_string(prompts.embeddings.dim()));
  }
  if (prompts.per_class_counts.size() != support.num_classes()) {
    throw Error(ErrorCode::kInvalidArgument,
                "support and prompts disagree on the class count");
  }
  if (!(residual_ratio >= 0.0 && residual_ratio <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "residual ratio must lie in [0, 1]");
  }

  PrototypeModel model;
  model.bank.image_memory = support.embeddings.to_tensor();
  model.bank.text_memory = prompts.embeddings.to_tensor();
  model.bank.image_labels = support.labels;
  model.bank.text_labels = prompts.labels;
  model.bank.num_classes = support.num_classes();
  model.bank.train_image = true;
  model.bank.train_text = train_text;

  model.adapter.kind = kind;
  model.adapter.dim = dim;
  model.adapter.residual_ratio = residual_ratio;
  Rng rng(seed);
  for (const Shape& shape : AdapterParams::weight_shapes(kind, dim)) {
    Tensor w(shape);
    // Rank-1 tensors are biases.
    if (shape.size() > 1) {
      // Linear weights are [in, out]; conv kernels are [out, in, 3, 3].
      const std::size_t fan_in =
          is_conv(kind) ? shape_numel(shape) / shape[0] : shape[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (float& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    model.adapter.weights.push_back(std::move(w));
  }
  return model;
}

Tensor adapt_query(const AdapterParams& params, const Tensor& queries) {
  ad::Tape tape;
  std::vector<ad::Var> weights;
  for (const Tensor& w : params.weights) weights.push_back(tape.constant(w));
  return graph::adapt_query(params, weights, tape.constant(queries)).value();
}

PrototypeSet compute_prototypes(const MemoryBank& bank) {
  ad::Tape tape;
  const auto vars = graph::compute_prototypes(
      bank, tape.constant(bank.image_memory), tape.constant(bank.text_memory));
  return PrototypeSet{vars.image.value(), vars.text.value()};
}

ModalityProbs modality_probs(const PrototypeSet& protos, const Tensor& adapted,
                             double beta) {
  ad::Tape tape;
  const graph::PrototypeVars pv{tape.constant(protos.image),
                                tape.constant(protos.text)};
  const auto mv = graph::modality_probs(pv, tape.constant(adapted), beta);
  return ModalityProbs{mv.image.value(), mv.text.value()};
}

Tensor probs_from_distances(const Tensor& sq_distances, double beta) {
  return ad::kernels::softmax_rows(ad::kernels::scale(sq_distances, -beta));
}

Tensor mix_probabilities(const Tensor& p_image, const Tensor& p_text,
                         double alpha) {
  return ad::kernels::add(ad::kernels::scale(p_image, alpha),
                          ad::kernels::scale(p_text, 1.0 - alpha));
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  std::vector<std::size_t> out(probs.rows(), 0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[i] = best;
  }
  return out;
}

Classification classify(const PrototypeSet& protos, const Tensor& adapted,
                        const MixtureHyperparams& hp) {
  hp.validate();
  const ModalityProbs mp = modality_probs(protos, adapted, hp.beta);
  Classification c;
  c.probs = mix_probabilities(mp.image, mp.text, hp.alpha);
  c.labels = argmax_rows(c.probs);
  return c;
}

Classification classify_queries(const PrototypeModel& model,
                                const Tensor& queries,
                                const MixtureHyperparams& hp) {
  return classify(compute_prototypes(model.bank),
                  adapt_query(model.adapter, queries), hp);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_float(float value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string prototypes_csv(const PrototypeSet& protos,
                           const ClassVocabulary& vocab) {
  const std::size_t n = protos.image.rows();
  const std::size_t c = protos.image.cols();
  if (vocab.size() != n || protos.text.rows() != n || protos.text.cols() != c) {
    throw Error(ErrorCode::kShapeMismatch,
                "prototype export: vocabulary and prototypes disagree");
  }
  std::string out = "class,modality";
  for (std::size_t j = 0; j < c; ++j) out += ",d" + std::to_string(j);
  out += '\n';
  const std::pair<const char*, const Tensor*> parts[] = {
      {"image", &protos.image}, {"text", &protos.text}};
  for (const auto& [modality, t] : parts) {
    for (std::size_t k = 0; k < n; ++k) {
      out += csv_field(vocab.name(k));
      out += ',';
      out += modality;
      for (float v : t->row(k)) {
        out += ',';
        out += format_float(v);
      }
      out += '\n';
    }
  }
  return out;
}

void export_prototypes(const PrototypeSet& protos, const ClassVocabulary& vocab,
                       const std::filesystem::path& path) {
  const std::string text = prototypes_csv(protos, vocab);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

namespace graph {

ModelVars bind_model(ad::Tape& tape, const PrototypeModel& model,
                     bool trainable) {
  ModelVars vars;
  vars.image_memory =
      tape.leaf(model.bank.image_memory, trainable && model.bank.train_image);
  vars.text_memory =
      tape.leaf(model.bank.text_memory, trainable && model.bank.train_text);
  for (const Tensor& w : model.adapter.weights) {
    vars.adapter.push_back(tape.leaf(w, trainable));
  }
  return vars;
}

ad::Var adapt_query(const AdapterParams& params,
                    std::span<const ad::Var> weights, ad::Var queries) {
  if (queries.shape().size() != 2 || queries.shape()[1] != params.dim) {
    throw Error(ErrorCode::kDimMismatch,
                "queries " + shape_string(queries.shape()) +
                    " do not match adapter dim " + std::to_string(params.dim));
  }
  const std::size_t expected = AdapterParams::weight_shapes(params.kind, params.dim).size();
  if (weights.size() != expected) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(to_string(params.kind)) + " adapter expects " +
                    std::to_string(expected) + " weight tensors");
  }

  ad::Var f;
  switch (params.kind) {
    case AdapterKind::kIdentity:
      return queries;
    case AdapterKind::kMlp: {
      const ad::Var hidden =
          ad::relu(ad::add_bias(ad::matmul(queries, weights[0]), weights[1]));
      f = ad::add_bias(ad::matmul(hidden, weights[2]), weights[3]);
      break;
    }
    case AdapterKind::kConv2:
    case AdapterKind::kConv3: {
      const std::size_t batch = queries.shape()[0];
      const std::size_t side = grid_side(params.dim);
      ad::Var h = ad::reshape(queries, {batch, 1, side, side});
      const std::size_t layers = weights.size() / 2;
      for (std::size_t l = 0; l < layers; ++l) {
        h = ad::conv2d(h, weights[2 * l], weights[2 * l + 1]);
        if (l + 1 < layers) h = ad::relu(h);
      }
      f = ad::reshape(h, {batch, params.dim});
      break;
    }
  }
  const double r = params.residual_ratio;
  const ad::Var blended =
      ad::add(ad::scale(f, r), ad::scale(queries, 1.0 - r));
  return ad::l2norm_rows(blended);
}

PrototypeVars compute_prototypes(const MemoryBank& bank, ad::Var image_memory,
                                 ad::Var text_memory) {
  return PrototypeVars{
      ad::group_mean_rows(image_memory, bank.image_labels, bank.num_classes),
      ad::group_mean_rows(text_memory, bank.text_labels, bank.num_classes)};
}

ModalityVars modality_probs(const PrototypeVars& protos, ad::Var adapted,
                            double beta) {
  if (!(beta > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "beta must be positive");
  }
  auto head = [&](ad::Var prototypes) {
    return ad::softmax_rows(
        ad::scale(ad::sq_euclidean(adapted, prototypes), -beta));
  };
  return ModalityVars{head(protos.image), head(protos.text)};
}

ad::Var mix_probabilities(const ModalityVars& probs, double alpha) {
  return ad::add(ad::scale(probs.image, alpha),
                 ad::scale(probs.text, 1.0 - alpha));
}

}  // namespace graph

}  // namespace protofs
