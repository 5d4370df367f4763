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

#include "protofs/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "protofs/digest.hpp"
#include "protofs/error.hpp"
#include "protofs/random.hpp"

namespace protofs {
namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct ForwardResult {
  ad::Var l1, l2, l3, total;
};

ForwardResult forward_losses(const PrototypeModel& model,
                             const graph::ModelVars& vars, ad::Var queries,
                             std::span<const std::size_t> labels,
                             const MixtureHyperparams& hp,
                             const LossConfig& losses) {
  const ad::Var adapted = graph::adapt_query(model.adapter, vars.adapter, queries);
  const auto protos =
      graph::compute_prototypes(model.bank, vars.image_memory, vars.text_memory);
  const auto mp = graph::modality_probs(protos, adapted, hp.beta);
  const ad::Var probs = graph::mix_probabilities(mp, hp.alpha);
  ForwardResult r;
  r.l1 = graph::loss_l1(probs, labels);
  r.l2 = graph::loss_l2(protos);
  r.l3 = graph::loss_l3(protos);
  r.total = graph::total_loss(r.l1, r.l2, r.l3, losses);
  return r;
}

void require_finite_losses(const StepLosses& s, std::size_t epoch) {
  if (!std::isfinite(s.l1) || !std::isfinite(s.l2) || !std::isfinite(s.l3) ||
      !std::isfinite(s.total)) {
    throw Error(ErrorCode::kNonFiniteLoss,
                "epoch " + std::to_string(epoch) + ": l1=" + format_double(s.l1) +
                    " l2=" + format_double(s.l2) + " l3=" + format_double(s.l3) +
                    " total=" + format_double(s.total) +
                    " (check beta and the learning rate)");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid Adam constants");
  }
  losses.validate();
}

std::string loss_trace_csv(const LossTrace& trace) {
  std::string out = "epoch,l1,l2,l3,total\n";
  for (const LossRecord& r : trace) {
    out += std::to_string(r.epoch) + ',' + format_double(r.l1) + ',' +
           format_double(r.l2) + ',' + format_double(r.l3) + ',' +
           format_double(r.total) + '\n';
  }
  return out;
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Adam: params and grads differ in count");
  }
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->numel(), 0.0);
      v_.emplace_back(p->numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Adam: parameter list changed between steps");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    const auto g = grads[i].data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      const double update = lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      p[j] = static_cast<float>(static_cast<double>(p[j]) - update);
    }
  }
}

StepLosses evaluate_losses(const PrototypeModel& model,
                           const SupportSet& queries,
                           const MixtureHyperparams& hp,
                           const LossConfig& losses) {
  hp.validate();
  ad::Tape tape;
  const auto vars = graph::bind_model(tape, model, false);
  const auto r = forward_losses(model, vars,
                                tape.constant(queries.embeddings.to_tensor()),
                                queries.labels, hp, losses);
  return {r.l1.value()[0], r.l2.value()[0], r.l3.value()[0], r.total.value()[0]};
}

TrainResult train(PrototypeModel model, const SupportSet& support,
                  const TrainConfig& cfg, const MixtureHyperparams& hp) {
  cfg.validate();
  hp.validate();
  if (support.embeddings.dim() != model.dim()) {
    throw Error(ErrorCode::kDimMismatch, "training queries do not match the model dim");
  }
  TrainResult result{std::move(model), {}};
  PrototypeModel& m = result.model;

  const std::size_t rows = support.embeddings.rows();
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= rows;
  const Tensor all_queries = support.embeddings.to_tensor();
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  Adam adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!full_batch) rng.shuffle(order.begin(), order.end());
    const std::size_t batch = full_batch ? rows : cfg.batch_size;
    StepLosses sum{0.0, 0.0, 0.0, 0.0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < rows; start += batch) {
      const std::size_t end = std::min(rows, start + batch);
      Tensor queries;
      std::vector<std::size_t> labels;
      if (full_batch) {
        queries = all_queries;
        labels = support.labels;
      } else {
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        queries = support.embeddings.select_rows(idx).to_tensor();
        for (std::size_t i : idx) labels.push_back(support.labels[i]);
      }

      ad::Tape tape;
      const auto vars = graph::bind_model(tape, m, true);
      const auto fwd = forward_losses(m, vars, tape.constant(std::move(queries)),
                                      labels, hp, cfg.losses);
      const StepLosses step{fwd.l1.value()[0], fwd.l2.value()[0],
                            fwd.l3.value()[0], fwd.total.value()[0]};
      require_finite_losses(step, epoch);
      sum.l1 += step.l1;
      sum.l2 += step.l2;
      sum.l3 += step.l3;
      sum.total += step.total;
      ++batches;

      tape.backward(fwd.total);
      std::vector<Tensor*> params;
      std::vector<Tensor> grads;
      if (m.bank.train_image) {
        params.push_back(&m.bank.image_memory);
        grads.push_back(tape.grad(vars.image_memory));
      }
      if (m.bank.train_text) {
        params.push_back(&m.bank.text_memory);
        grads.push_back(tape.grad(vars.text_memory));
      }
      for (std::size_t i = 0; i < m.adapter.weights.size(); ++i) {
        params.push_back(&m.adapter.weights[i]);
        grads.push_back(tape.grad(vars.adapter[i]));
      }
      adam.step(params, grads);
      for (const Tensor* p : params) {
        if (!p->all_finite()) {
          throw Error(ErrorCode::kNonFiniteLoss,
                      "epoch " + std::to_string(epoch) +
                          ": a parameter became non-finite after the update");
        }
      }
    }
    const auto nb = static_cast<double>(batches);
    result.trace.push_back(LossRecord{epoch, sum.l1 / nb, sum.l2 / nb,
                                      sum.l3 / nb, sum.total / nb});
  }
  return result;
}

TrainResult fine_tune(const SupportSet& support, const TextPromptBank& prompts,
                      const TrainConfig& cfg, const MixtureHyperparams& hp) {
  cfg.validate();
  return train(init_model(support, prompts, cfg.adapter_kind, cfg.train_text,
                          cfg.seed, cfg.residual_ratio),
               support, cfg, hp);
}

// --- checkpoints ----------------------------------------------------------

namespace {

constexpr const char* kHeaderFile = "header.json";

EmbeddingMatrix as_matrix(const Tensor& t) {
  const std::size_t rows = t.rank() == 0 ? 1 : t.dim(0);
  const std::size_t cols = rows == 0 ? 0 : t.numel() / rows;
  return EmbeddingMatrix(rows, cols, t.values());
}

json config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"losses", c.losses.to_string()},
              {"train_text", c.train_text},
              {"adapter", std::string(to_string(c.adapter_kind))},
              {"residual_ratio", c.residual_ratio}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.losses = LossConfig::parse(j.at("losses").get<std::string>());
  c.train_text = j.at("train_text").get<bool>();
  c.adapter_kind = parse_adapter_kind(j.at("adapter").get<std::string>());
  c.residual_ratio = j.at("residual_ratio").get<double>();
  return c;
}

json write_tensor(const std::filesystem::path& dir, const std::string& file,
                  const Tensor& t) {
  const std::string bytes = encode_container(as_matrix(t));
  std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + (dir / file).string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + (dir / file).string());
  return json{{"file", file}, {"shape", t.shape()}, {"sha256", sha256_hex(bytes)}};
}

Tensor load_tensor(const std::filesystem::path& dir, const json& entry) {
  const auto file = entry.at("file").get<std::string>();
  const auto shape = entry.at("shape").get<Shape>();
  const auto digest = entry.at("sha256").get<std::string>();
  const auto path = dir / file;
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, path.string());
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.eof() && !in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  if (sha256_hex(bytes) != digest) {
    throw Error(ErrorCode::kCorruptCheckpoint, file + " does not match its recorded digest");
  }
  EmbeddingMatrix m;
  try {
    m = decode_container(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, file + ": " + e.what());
  }
  if (m.rows() * m.dim() != shape_numel(shape)) {
    throw Error(ErrorCode::kCorruptCheckpoint,
                file + " holds " + std::to_string(m.rows() * m.dim()) +
                    " values but the header declares " + shape_string(shape));
  }
  return Tensor(shape, std::vector<float>(m.data().begin(), m.data().end()));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());

  const PrototypeModel& m = ckpt.model;
  json header;
  header["version"] = kCheckpointVersion;
  header["classes"] = ckpt.class_names;
  header["num_classes"] = m.bank.num_classes;
  header["dim"] = m.dim();
  header["image_labels"] = m.bank.image_labels;
  header["text_labels"] = m.bank.text_labels;
  header["train_image"] = m.bank.train_image;
  header["train_text"] = m.bank.train_text;
  header["adapter"] = {{"kind", std::string(to_string(m.adapter.kind))},
                       {"residual_ratio", m.adapter.residual_ratio}};
  header["hyperparams"] = {{"alpha", ckpt.hp.alpha},
                           {"beta", ckpt.hp.beta},
                           {"source", ckpt.hp_source}};
  header["config"] = config_to_json(ckpt.config);
  header["epoch"] = ckpt.epoch;
  if (ckpt.final_losses) {
    const LossRecord& r = *ckpt.final_losses;
    header["final_losses"] = {{"epoch", r.epoch}, {"l1", r.l1}, {"l2", r.l2},
                              {"l3", r.l3}, {"total", r.total}};
  }

  json tensors;
  tensors["image_memory"] = write_tensor(dir, "image_memory.pce", m.bank.image_memory);
  tensors["text_memory"] = write_tensor(dir, "text_memory.pce", m.bank.text_memory);
  json adapter = json::array();
  for (std::size_t i = 0; i < m.adapter.weights.size(); ++i) {
    const std::string file = "adapter_" + std::to_string(i) + ".pce";
    adapter.push_back(write_tensor(dir, file, m.adapter.weights[i]));
  }
  tensors["adapter"] = adapter;
  header["tensors"] = tensors;

  std::ofstream out(dir / kHeaderFile, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write checkpoint header");
  out << header.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "cannot write checkpoint header");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto header_path = dir / kHeaderFile;
  if (!std::filesystem::exists(header_path)) {
    throw Error(ErrorCode::kMissingFile, header_path.string());
  }
  json header;
  {
    std::ifstream in(header_path);
    std::stringstream text;
    text << in.rdbuf();
    try {
      header = json::parse(text.str());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptCheckpoint, e.what());
    }
  }
  if (!header.is_object() || !header.contains("version") ||
      !header["version"].is_number_integer()) {
    throw Error(ErrorCode::kCorruptCheckpoint, "header has no integer version");
  }
  if (header["version"].get<int>() != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "checkpoint version " + header["version"].dump() +
                    ", expected " + std::to_string(kCheckpointVersion));
  }

  Checkpoint ckpt;
  try {
    PrototypeModel& m = ckpt.model;
    ckpt.class_names = header.at("classes").get<std::vector<std::string>>();
    m.bank.num_classes = header.at("num_classes").get<std::size_t>();
    m.bank.image_labels = header.at("image_labels").get<std::vector<std::size_t>>();
    m.bank.text_labels = header.at("text_labels").get<std::vector<std::size_t>>();
    m.bank.train_image = header.at("train_image").get<bool>();
    m.bank.train_text = header.at("train_text").get<bool>();
    const std::size_t dim = header.at("dim").get<std::size_t>();
    m.adapter.kind = parse_adapter_kind(header.at("adapter").at("kind").get<std::string>());
    m.adapter.residual_ratio = header.at("adapter").at("residual_ratio").get<double>();
    m.adapter.dim = dim;
    ckpt.hp.alpha = header.at("hyperparams").at("alpha").get<double>();
    ckpt.hp.beta = header.at("hyperparams").at("beta").get<double>();
    ckpt.hp_source = header.at("hyperparams").at("source").get<std::string>();
    ckpt.config = config_from_json(header.at("config"));
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    if (header.contains("final_losses")) {
      const json& f = header["final_losses"];
      ckpt.final_losses = LossRecord{f.at("epoch").get<std::size_t>(), f.at("l1").get<double>(),
                                     f.at("l2").get<double>(), f.at("l3").get<double>(),
                                     f.at("total").get<double>()};
    }

    const json& tensors = header.at("tensors");
    m.bank.image_memory = load_tensor(dir, tensors.at("image_memory"));
    m.bank.text_memory = load_tensor(dir, tensors.at("text_memory"));
    for (const json& entry : tensors.at("adapter")) {
      m.adapter.weights.push_back(load_tensor(dir, entry));
    }

    // Structural checks against what the header promises.
    const auto shapes = AdapterParams::weight_shapes(m.adapter.kind, dim);
    bool ok = shapes.size() == m.adapter.weights.size();
    for (std::size_t i = 0; ok && i < shapes.size(); ++i) {
      ok = shapes[i] == m.adapter.weights[i].shape();
    }
    ok = ok && m.bank.image_memory.rank() == 2 && m.bank.text_memory.rank() == 2 &&
         m.bank.image_memory.cols() == dim && m.bank.text_memory.cols() == dim &&
         m.bank.image_memory.rows() == m.bank.image_labels.size() &&
         m.bank.text_memory.rows() == m.bank.text_labels.size() &&
         ckpt.class_names.size() == m.bank.num_classes;
    if (!ok) throw Error(ErrorCode::kCorruptCheckpoint, "tensor shapes disagree with header");
    std::vector<bool> seen_image(m.bank.num_classes), seen_text(m.bank.num_classes);
    for (std::size_t l : m.bank.image_labels) {
      if (l >= m.bank.num_classes) throw Error(ErrorCode::kCorruptCheckpoint, "image label out of range");
      seen_image[l] = true;
    }
    for (std::size_t l : m.bank.text_labels) {
      if (l >= m.bank.num_classes) throw Error(ErrorCode::kCorruptCheckpoint, "text label out of range");
      seen_text[l] = true;
    }
    for (std::size_t k = 0; k < m.bank.num_classes; ++k) {
      if (!seen_image[k] || !seen_text[k]) {
        throw Error(ErrorCode::kCorruptCheckpoint, "class without memory rows");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptCheckpoint) throw;
    throw Error(ErrorCode::kCorruptCheckpoint, e.what());
  }
  return ckpt;
}

}  // namespace protofs
