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

#ifndef PROTOFS_HPARAM_HPP_
#define PROTOFS_HPARAM_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "protofs/embedding_store.hpp"
#include "protofs/model.hpp"

namespace protofs {

struct GridSpec {
  std::vector<double> alphas;
  std::vector<double> betas;

  /// alpha in 0.00..1.00 step 0.05; beta at 20 log-spaced points in
  /// [0.1, 100].
  static GridSpec defaults();
  void validate() const;
};

struct GridCell {
  double alpha = 0.0;
  double beta = 0.0;
  double accuracy = 0.0;
};

struct GridResult {
  MixtureHyperparams best;
  double best_accuracy = 0.0;
  std::vector<GridCell> table;  // alpha-major, in GridSpec order
};

/// Validation accuracy for every (alpha, beta) cell. Adapted queries and
/// both query-to-prototype distance matrices are computed once; each cell
/// only re-runs the softmax and the mixture. Ties on accuracy go to the lower
/// alpha, then the lower beta. `threads` > 1 splits the beta columns across
/// worker threads; the result does not depend on it.
GridResult grid_search(const PrototypeModel& model, const QuerySet& val,
                       const GridSpec& grid, std::size_t threads = 1);

/// `alpha,beta,accuracy`.
std::string grid_csv(const GridResult& result);

}  // namespace protofs

#endif  // PROTOFS_HPARAM_HPP_
