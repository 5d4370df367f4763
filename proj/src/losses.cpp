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

#include "protofs/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "protofs/error.hpp"

namespace protofs {
namespace {

ad::Var info_nce(ad::Var anchors, ad::Var others) {
  const ad::Var a = ad::l2norm_rows(anchors);
  const ad::Var b = ad::l2norm_rows(others);
  const ad::Var logits = ad::matmul(a, ad::transpose(b));
  const std::size_t n = logits.shape()[0];
  std::vector<std::size_t> diagonal(n);
  std::iota(diagonal.begin(), diagonal.end(), std::size_t{0});
  return ad::neg(ad::mean(ad::pick(ad::log_softmax_rows(logits), diagonal)));
}

}  // namespace

void LossConfig::validate() const {
  if (!use_l1 && !use_l2 && !use_l3) {
    throw Error(ErrorCode::kInvalidArgument, "at least one loss term must be enabled");
  }
}

std::string LossConfig::to_string() const {
  std::string out;
  auto append = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  append(use_l1, "l1");
  append(use_l2, "l2");
  append(use_l3, "l3");
  return out;
}

LossConfig LossConfig::parse(std::string_view text) {
  LossConfig cfg{false, false, false};
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find_first_of(",+", start), text.size());
    const std::string_view token = text.substr(start, end - start);
    if (token == "l1") {
      cfg.use_l1 = true;
    } else if (token == "l2") {
      cfg.use_l2 = true;
    } else if (token == "l3") {
      cfg.use_l3 = true;
    } else {
      throw Error(ErrorCode::kInvalidArgument,
                  "unknown loss term '" + std::string(token) + "'");
    }
    start = end + 1;
  }
  cfg.validate();
  return cfg;
}

std::vector<LossConfig> LossConfig::ablation_rows() {
  return {{true, false, false}, {false, true, false}, {false, false, true},
          {true, true, false},  {false, true, true},  {true, false, true},
          {true, true, true}};
}

namespace graph {

ad::Var loss_l1(ad::Var probs, std::span<const std::size_t> labels) {
  const ad::Var p = ad::clamp_min(ad::pick(probs, labels), kProbabilityFloor);
  return ad::neg(ad::mean(ad::log(p)));
}

ad::Var loss_l2(const PrototypeVars& protos) {
  return info_nce(protos.image, protos.text);
}

ad::Var loss_l3(const PrototypeVars& protos) {
  return info_nce(protos.text, protos.image);
}

ad::Var total_loss(ad::Var l1, ad::Var l2, ad::Var l3, const LossConfig& cfg) {
  cfg.validate();
  ad::Var total;
  bool have = false;
  for (const auto& [on, term] : {std::pair{cfg.use_l1, l1}, std::pair{cfg.use_l2, l2},
                                 std::pair{cfg.use_l3, l3}}) {
    if (!on) continue;
    total = have ? ad::add(total, term) : term;
    have = true;
  }
  return total;
}

}  // namespace graph

double loss_l1(std::span<const double> true_class_probs) {
  if (true_class_probs.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "loss_l1 needs at least one query");
  }
  double s = 0.0;
  for (double p : true_class_probs) s -= std::log(std::max(p, kProbabilityFloor));
  return s / static_cast<double>(true_class_probs.size());
}

double loss_l2(const PrototypeSet& protos) {
  ad::Tape tape;
  return graph::loss_l2({tape.constant(protos.image), tape.constant(protos.text)})
      .value()[0];
}

double loss_l3(const PrototypeSet& protos) {
  ad::Tape tape;
  return graph::loss_l3({tape.constant(protos.image), tape.constant(protos.text)})
      .value()[0];
}

double total_loss(double l1, double l2, double l3, const LossConfig& cfg) {
  cfg.validate();
  return (cfg.use_l1 ? l1 : 0.0) + (cfg.use_l2 ? l2 : 0.0) + (cfg.use_l3 ? l3 : 0.0);
}

}  // namespace protofs
