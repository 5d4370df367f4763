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

#ifndef PROTOFS_SYNTHETIC_HPP_
#define PROTOFS_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>

#include "protofs/embedding_store.hpp"

namespace protofs {

/// Gaussian clusters around unit-norm class centers. Text prompts sit around
/// a second set of centers whose cosine to the image centers is
/// `text_alignment`, or are independent random directions when
/// `text_is_noise` is set.
struct SyntheticSpec {
  std::size_t num_classes = 5;
  std::size_t dim = 64;
  std::size_t support_per_class = 4;
  std::size_t val_per_class = 4;
  std::size_t test_per_class = 8;
  std::size_t prompts_per_class = 2;
  double noise_sigma = 0.01;
  double min_center_distance = 1.0;
  double text_alignment = 0.3;
  double text_noise_sigma = 0.01;
  bool text_is_noise = false;
  std::uint64_t seed = 1;
};

/// All rows are L2-normalized. Class centers are kept in the result for
/// tests that need them.
struct SyntheticData {
  Dataset dataset;
  EmbeddingMatrix image_centers;
  EmbeddingMatrix text_centers;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace protofs

#endif  // PROTOFS_SYNTHETIC_HPP_
