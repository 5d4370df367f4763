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

#ifndef PROTOFS_LOSSES_HPP_
#define PROTOFS_LOSSES_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protofs/diffmath.hpp"
#include "protofs/model.hpp"

namespace protofs {

inline constexpr double kProbabilityFloor = 1e-12;

struct LossConfig {
  bool use_l1 = true;
  bool use_l2 = true;
  bool use_l3 = true;

  void validate() const;
  std::string to_string() const;  // e.g. "l1+l2+l3"

  /// Accepts "l1", "l2", "l3" joined by ',' or '+'.
  static LossConfig parse(std::string_view text);

  /// The seven non-empty term combinations, in ablation-table order:
  /// l1, l2, l3, l1+l2, l2+l3, l1+l3, l1+l2+l3.
  static std::vector<LossConfig> ablation_rows();

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

namespace graph {

// Mean over queries of -log(max(p_true, floor)). `probs` is [L, N].
ad::Var loss_l1(ad::Var probs, std::span<const std::size_t> labels);

// Image prototype anchors contrasted against all text prototypes; both sets
// are L2-normalized before the dot products. Mean over classes.
ad::Var loss_l2(const PrototypeVars& protos);

// Mirror of loss_l2 with text prototypes as anchors.
ad::Var loss_l3(const PrototypeVars& protos);

// Sum of the enabled terms.
ad::Var total_loss(ad::Var l1, ad::Var l2, ad::Var l3, const LossConfig& cfg);

}  // namespace graph

double loss_l1(std::span<const double> true_class_probs);
double loss_l2(const PrototypeSet& protos);
double loss_l3(const PrototypeSet& protos);
double total_loss(double l1, double l2, double l3, const LossConfig& cfg);

}  // namespace protofs

#endif  // PROTOFS_LOSSES_HPP_
