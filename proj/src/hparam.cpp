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

#include "protofs/hparam.hpp"

#include <charconv>
#include <cmath>
#include <thread>

#include "protofs/error.hpp"

namespace protofs {
namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double accuracy_of(const std::vector<std::size_t>& predicted,
                   const std::vector<std::size_t>& truth) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return truth.empty() ? 0.0
                       : static_cast<double>(correct) / static_cast<double>(truth.size());
}

}  // namespace

GridSpec GridSpec::defaults() {
  GridSpec g;
  for (int i = 0; i <= 20; ++i) g.alphas.push_back(i / 20.0);
  for (int i = 0; i < 20; ++i) g.betas.push_back(0.1 * std::pow(1000.0, i / 19.0));
  return g;
}

void GridSpec::validate() const {
  if (alphas.empty() || betas.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs at least one alpha and one beta");
  }
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "grid alpha outside [0, 1]: " + format_double(a));
    }
  }
  for (double b : betas) {
    if (!(b > 0.0) || !std::isfinite(b)) {
      throw Error(ErrorCode::kInvalidArgument, "grid beta must be positive: " + format_double(b));
    }
  }
}

GridResult grid_search(const PrototypeModel& model, const QuerySet& val,
                       const GridSpec& grid, std::size_t threads) {
  grid.validate();
  if (!val.labeled()) {
    throw Error(ErrorCode::kNoLabels, "grid search needs a labeled validation set");
  }
  const auto& truth = *val.labels;
  const PrototypeSet protos = compute_prototypes(model.bank);
  const Tensor adapted = adapt_query(model.adapter, val.embeddings.to_tensor());
  const Tensor d_image = ad::kernels::sq_euclidean(adapted, protos.image);
  const Tensor d_text = ad::kernels::sq_euclidean(adapted, protos.text);

  const std::size_t na = grid.alphas.size();
  const std::size_t nb = grid.betas.size();
  std::vector<double> acc(na * nb, 0.0);

  auto run_beta = [&](std::size_t b) {
    const double beta = grid.betas[b];
    const Tensor p_image = probs_from_distances(d_image, beta);
    const Tensor p_text = probs_from_distances(d_text, beta);
    for (std::size_t a = 0; a < na; ++a) {
      const Tensor mixed = mix_probabilities(p_image, p_text, grid.alphas[a]);
      acc[a * nb + b] = accuracy_of(argmax_rows(mixed), truth);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, nb));
  if (workers == 1) {
    for (std::size_t b = 0; b < nb; ++b) run_beta(b);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < nb; b += workers) run_beta(b);
      });
    }
  }

  GridResult result;
  bool have = false;
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      const GridCell cell{grid.alphas[a], grid.betas[b], acc[a * nb + b]};
      result.table.push_back(cell);
      const bool better =
          !have || cell.accuracy > result.best_accuracy ||
          (cell.accuracy == result.best_accuracy &&
           (cell.alpha < result.best.alpha ||
            (cell.alpha == result.best.alpha && cell.beta < result.best.beta)));
      if (better) {
        result.best = MixtureHyperparams{cell.alpha, cell.beta};
        result.best_accuracy = cell.accuracy;
        have = true;
      }
    }
  }
  return result;
}

std::string grid_csv(const GridResult& result) {
  std::string out = "alpha,beta,accuracy\n";
  for (const GridCell& c : result.table) {
    out += format_double(c.alpha) + ',' + format_double(c.beta) + ',' +
           format_double(c.accuracy) + '\n';
  }
  return out;
}

}  // namespace protofs
