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

#ifndef PROTOFS_TRAINER_HPP_
#define PROTOFS_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protofs/embedding_store.hpp"
#include "protofs/losses.hpp"
#include "protofs/model.hpp"

namespace protofs {

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 0;  // 0 means full batch
  std::uint64_t seed = 0;
  LossConfig losses;
  bool train_text = false;
  AdapterKind adapter_kind = AdapterKind::kMlp;
  double residual_ratio = kDefaultResidualRatio;

  void validate() const;
};

struct LossRecord {
  std::size_t epoch = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double total = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

using LossTrace = std::vector<LossRecord>;

/// `epoch,l1,l2,l3,total` with round-trip precision.
std::string loss_trace_csv(const LossTrace& trace);

/// Adam over a fixed list of float32 tensors; moments are kept in float64.
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double eps)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct StepLosses {
  double l1, l2, l3, total;
};

/// Evaluates the three loss terms of `model` with `queries` acting as the
/// labeled query set. No gradients are taken.
StepLosses evaluate_losses(const PrototypeModel& model,
                           const SupportSet& queries,
                           const MixtureHyperparams& hp,
                           const LossConfig& losses);

struct TrainResult {
  PrototypeModel model;
  LossTrace trace;
};

/// Adam on the enabled loss terms with the support set doubling as the query
/// set. Each trace record holds the losses seen before that epoch's updates
/// (averaged over mini-batches). Zero epochs returns the model unchanged.
/// Throws NonFiniteLoss at the first NaN/Inf loss or parameter.
TrainResult train(PrototypeModel model, const SupportSet& support,
                  const TrainConfig& cfg, const MixtureHyperparams& hp);

/// init_model from cfg followed by train().
TrainResult fine_tune(const SupportSet& support, const TextPromptBank& prompts,
                      const TrainConfig& cfg, const MixtureHyperparams& hp);

// --- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  PrototypeModel model;
  MixtureHyperparams hp;
  TrainConfig config;
  std::vector<std::string> class_names;
  std::size_t epoch = 0;
  std::optional<LossRecord> final_losses;
  std::string hp_source = "flags";  // flags | search-before | search-after
};

/// Writes `dir/header.json` plus one PCE1 file per tensor.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace protofs

#endif  // PROTOFS_TRAINER_HPP_
