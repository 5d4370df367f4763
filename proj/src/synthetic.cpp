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

#include "protofs/synthetic.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "protofs/error.hpp"
#include "protofs/random.hpp"

namespace protofs {
namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double ss = 0.0;
  do {
    ss = 0.0;
    for (double& x : v) {
      x = rng.normal();
      ss += x * x;
    }
  } while (ss == 0.0);
  const double norm = std::sqrt(ss);
  for (double& x : v) x /= norm;
  return v;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Unit vector with cosine `cos` to `anchor`.
std::vector<double> tilted(Rng& rng, const std::vector<double>& anchor, double cos) {
  std::vector<double> u = random_unit(rng, anchor.size());
  double proj = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) proj += u[i] * anchor[i];
  double ss = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] -= proj * anchor[i];
    ss += u[i] * u[i];
  }
  const double norm = std::sqrt(ss);
  const double sin = std::sqrt(std::max(0.0, 1.0 - cos * cos));
  std::vector<double> out(anchor.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = cos * anchor[i] + sin * u[i] / norm;
  return out;
}

// `per_class` noisy, normalized rows around each center, grouped by class.
void sample_rows(Rng& rng, const std::vector<std::vector<double>>& centers,
                 std::size_t per_class, double sigma, std::vector<float>& data,
                 std::vector<std::size_t>& labels) {
  for (std::size_t k = 0; k < centers.size(); ++k) {
    for (std::size_t r = 0; r < per_class; ++r) {
      std::vector<double> v = centers[k];
      double ss = 0.0;
      for (double& x : v) {
        x += sigma * rng.normal();
        ss += x * x;
      }
      const double norm = std::sqrt(ss);
      for (double x : v) data.push_back(static_cast<float>(x / norm));
      labels.push_back(k);
    }
  }
}

EmbeddingMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  std::vector<float> data;
  for (const auto& r : rows) {
    for (double x : r) data.push_back(static_cast<float>(x));
  }
  return EmbeddingMatrix(rows.size(), rows.empty() ? 0 : rows[0].size(), std::move(data));
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.dim < 2 || spec.support_per_class < 1 ||
      spec.prompts_per_class < 1) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic spec is degenerate");
  }
  Rng rng(spec.seed);

  std::vector<std::vector<double>> centers;
  std::size_t attempts = 0;
  while (centers.size() < spec.num_classes) {
    if (++attempts > 100000) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cannot place class centers that far apart in this dim");
    }
    auto c = random_unit(rng, spec.dim);
    bool ok = true;
    for (const auto& other : centers) ok = ok && distance(c, other) > spec.min_center_distance;
    if (ok) centers.push_back(std::move(c));
  }

  std::vector<std::vector<double>> text_centers;
  for (const auto& c : centers) {
    text_centers.push_back(spec.text_is_noise ? random_unit(rng, spec.dim)
                                              : tilted(rng, c, spec.text_alignment));
  }

  SyntheticData out;
  Dataset& ds = out.dataset;
  ds.name = "synthetic";
  std::vector<std::string> names;
  for (std::size_t k = 0; k < spec.num_classes; ++k) names.push_back("class" + std::to_string(k));
  ds.vocab = ClassVocabulary(names);

  const std::size_t n = spec.num_classes;
  auto build = [&](std::size_t per_class, double sigma,
                   const std::vector<std::vector<double>>& around) {
    std::vector<float> data;
    std::vector<std::size_t> labels;
    sample_rows(rng, around, per_class, sigma, data, labels);
    return std::pair{EmbeddingMatrix(n * per_class, spec.dim, std::move(data)),
                     std::move(labels)};
  };

  auto [support, support_labels] = build(spec.support_per_class, spec.noise_sigma, centers);
  ds.support = SupportSet::make(std::move(support), std::move(support_labels), n);

  std::vector<float> text_data;
  std::vector<std::size_t> text_labels;
  if (spec.text_is_noise) {
    // Every prompt is an independent random direction.
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t r = 0; r < spec.prompts_per_class; ++r) {
        for (double x : random_unit(rng, spec.dim)) text_data.push_back(static_cast<float>(x));
        text_labels.push_back(k);
      }
    }
  } else {
    sample_rows(rng, text_centers, spec.prompts_per_class, spec.text_noise_sigma,
                text_data, text_labels);
  }
  std::vector<std::string> prompts;
  for (std::size_t i = 0; i < text_labels.size(); ++i) {
    prompts.push_back("a photo of " + names[text_labels[i]]);
  }
  EmbeddingMatrix text(text_labels.size(), spec.dim, std::move(text_data));
  ds.text = TextPromptBank::make(std::move(text), std::move(text_labels), n,
                                 std::move(prompts));

  auto [val, val_labels] = build(spec.val_per_class, spec.noise_sigma, centers);
  ds.val = QuerySet::make(std::move(val), std::move(val_labels), n);
  auto [test, test_labels] = build(spec.test_per_class, spec.noise_sigma, centers);
  ds.test = QuerySet::make(std::move(test), std::move(test_labels), n);

  out.image_centers = to_matrix(centers);
  out.text_centers = to_matrix(text_centers);
  return out;
}

}  // namespace protofs
