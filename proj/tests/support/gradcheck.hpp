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

#ifndef PROTOFS_TESTS_SUPPORT_GRADCHECK_HPP_
#define PROTOFS_TESTS_SUPPORT_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <string>
#include <vector>

#include "protofs/diffmath.hpp"
#include "protofs/losses.hpp"
#include "protofs/model.hpp"
#include "protofs/random.hpp"
#include "reference.hpp"

namespace protofs::testing {

inline constexpr double kFiniteDifferenceStep = 1e-5;

// |a - b| / max(|a|, |b|, floor), or 0 when that scale is exactly zero.
inline double relative_error(double a, double b, double floor = 0.0) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<param>[index]: analytic vs numeric"
};

struct LossProblem {
  PrototypeModel model;
  std::vector<reference::Vec> queries;  // float values widened to double
  Tensor query_tensor;
  std::vector<std::size_t> labels;
  MixtureHyperparams hp;
  LossConfig losses;
};

// Random instance: N classes, K support rows and K prompts per class,
// memories perturbed away from the queries so nothing sits at a symmetric
// point. Memories and queries are unit-norm before perturbation.
inline LossProblem random_problem(std::size_t n, std::size_t k, std::size_t dim,
                                  AdapterKind kind, std::uint64_t seed) {
  Rng rng(seed);
  auto random_rows = [&](std::size_t rows) {
    std::vector<float> data(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
      double ss = 0.0;
      std::vector<double> v(dim);
      for (double& x : v) {
        x = rng.normal();
        ss += x * x;
      }
      for (std::size_t c = 0; c < dim; ++c) {
        data[r * dim + c] = static_cast<float>(v[c] / std::sqrt(ss));
      }
    }
    return EmbeddingMatrix(rows, dim, std::move(data));
  };
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < k; ++i) labels.push_back(c);
  }
  const SupportSet support = SupportSet::make(random_rows(n * k), labels, n);
  const TextPromptBank prompts = TextPromptBank::make(random_rows(n * k), labels, n);

  LossProblem p;
  p.model = init_model(support, prompts, kind, /*train_text=*/true, seed + 1);
  for (float& v : p.model.bank.image_memory.data()) v += static_cast<float>(0.1 * rng.normal());
  for (float& v : p.model.bank.text_memory.data()) v += static_cast<float>(0.1 * rng.normal());
  // Non-zero biases so their gradients are exercised away from init.
  for (std::size_t i = 1; i < p.model.adapter.weights.size(); i += 2) {
    for (float& v : p.model.adapter.weights[i].data()) v = static_cast<float>(0.05 * rng.normal());
  }
  p.query_tensor = support.embeddings.to_tensor();
  for (std::size_t r = 0; r < support.embeddings.rows(); ++r) {
    const auto row = support.embeddings.row(r);
    p.queries.emplace_back(row.begin(), row.end());
  }
  p.labels = labels;
  p.hp = MixtureHyperparams{0.3 + 0.4 * rng.uniform(), 1.0 + 4.0 * rng.uniform()};
  p.losses = LossConfig{true, true, true};
  return p;
}

struct AnalyticGrads {
  double loss = 0.0;
  Tensor image_memory;
  Tensor text_memory;
  std::vector<Tensor> adapter;
};

inline AnalyticGrads analytic_grads(const LossProblem& p) {
  ad::Tape tape;
  const auto vars = graph::bind_model(tape, p.model, true);
  const ad::Var q = tape.constant(p.query_tensor);
  const ad::Var adapted = graph::adapt_query(p.model.adapter, vars.adapter, q);
  const auto protos =
      graph::compute_prototypes(p.model.bank, vars.image_memory, vars.text_memory);
  const auto mp = graph::modality_probs(protos, adapted, p.hp.beta);
  const ad::Var probs = graph::mix_probabilities(mp, p.hp.alpha);
  const ad::Var total = graph::total_loss(graph::loss_l1(probs, p.labels),
                                          graph::loss_l2(protos),
                                          graph::loss_l3(protos), p.losses);
  tape.backward(total);
  AnalyticGrads g;
  g.loss = total.value()[0];
  g.image_memory = tape.grad(vars.image_memory);
  g.text_memory = tape.grad(vars.text_memory);
  for (const ad::Var& w : vars.adapter) g.adapter.push_back(tape.grad(w));
  return g;
}

// With `floor_fraction` > 0 the relative-error denominator is bounded below
// by that fraction of the largest analytic entry in the same tensor, which
// is the scale of float32 rounding in the forward pass. 0 gives the plain
// relative error.
inline GradCheckResult check_gradients(const LossProblem& p, double floor_fraction = 0.0) {
  const AnalyticGrads g = analytic_grads(p);
  reference::Params params = reference::params_of(p.model);
  GradCheckResult result;
  auto loss_at = [&]() {
    return reference::total_loss(p.model, params, p.queries, p.labels, p.hp.alpha,
                                 p.hp.beta, p.losses);
  };
  auto check_block = [&](reference::Vec& values, const Tensor& analytic,
                         const std::string& name) {
    double largest = 0.0;
    for (float g : analytic.data()) largest = std::max(largest, double(std::abs(g)));
    const double floor = floor_fraction * largest;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + kFiniteDifferenceStep;
      const double up = loss_at();
      values[i] = saved - kFiniteDifferenceStep;
      const double down = loss_at();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
      const double err = relative_error(analytic[i], numeric, floor);
      ++result.checked;
      if (result.worst.empty() || err > result.max_relative_error) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6e vs %.6e", double(analytic[i]), numeric);
        result.max_relative_error = err;
        result.worst = name + "[" + std::to_string(i) + "]: " + buf;
      }
    }
  };
  check_block(params.image_memory, g.image_memory, "image_memory");
  check_block(params.text_memory, g.text_memory, "text_memory");
  for (std::size_t w = 0; w < params.adapter.size(); ++w) {
    check_block(params.adapter[w], g.adapter[w], "adapter" + std::to_string(w));
  }
  return result;
}

}  // namespace protofs::testing

#endif  // PROTOFS_TESTS_SUPPORT_GRADCHECK_HPP_
