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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "gradcheck.hpp"
#include "protofs/error.hpp"
#include "protofs/model.hpp"
#include "protofs/random.hpp"
#include "reference.hpp"
#include "temp_dir.hpp"

namespace protofs {
namespace {

#define EXPECT_ERROR_CODE(stmt, expected)                  \
  do {                                                     \
    try {                                                  \
      stmt;                                                \
      ADD_FAILURE() << "expected " << to_string(expected); \
    } catch (const Error& e) {                             \
      EXPECT_EQ(e.code(), expected) << e.what();           \
    }                                                      \
  } while (0)

EmbeddingMatrix unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  std::vector<float> data(rows * dim);
  for (float& v : data) v = static_cast<float>(rng.normal());
  return l2_normalize_rows(EmbeddingMatrix(rows, dim, std::move(data)));
}

std::vector<std::size_t> balanced_labels(std::size_t n, std::size_t k) {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < n; ++c) labels.insert(labels.end(), k, c);
  return labels;
}

PrototypeModel random_model(std::size_t n, std::size_t k, std::size_t dim,
                            AdapterKind kind, std::uint64_t seed) {
  Rng rng(seed);
  const auto labels = balanced_labels(n, k);
  return init_model(SupportSet::make(unit_rows(n * k, dim, rng), labels, n),
                    TextPromptBank::make(unit_rows(n * k, dim, rng), labels, n), kind,
                    false, seed);
}

double row_norm(std::span<const float> row) {
  double ss = 0.0;
  for (float v : row) ss += double(v) * v;
  return std::sqrt(ss);
}

// --- init ------------------------------------------------------------------

TEST(InitModel, ConvNeedsSquareDim) {
  EXPECT_NO_THROW(random_model(2, 1, 1024, AdapterKind::kConv2, 1));
  EXPECT_ERROR_CODE(random_model(2, 1, 512, AdapterKind::kConv2, 1), ErrorCode::kDimNotSquare);
  EXPECT_ERROR_CODE(random_model(2, 1, 512, AdapterKind::kConv3, 1), ErrorCode::kDimNotSquare);
  EXPECT_NO_THROW(random_model(2, 1, 512, AdapterKind::kMlp, 1));
}

TEST(InitModel, DimMismatch) {
  Rng rng(1);
  const auto labels = balanced_labels(2, 1);
  EXPECT_ERROR_CODE(init_model(SupportSet::make(unit_rows(2, 16, rng), labels, 2),
                               TextPromptBank::make(unit_rows(2, 8, rng), labels, 2),
                               AdapterKind::kMlp, false, 1),
                    ErrorCode::kDimMismatch);
}

TEST(InitModel, MemoriesCopyInputsAndWeightsAreSeeded) {
  Rng rng(3);
  const auto labels = balanced_labels(3, 2);
  const SupportSet s = SupportSet::make(unit_rows(6, 16, rng), labels, 3);
  const TextPromptBank t = TextPromptBank::make(unit_rows(6, 16, rng), labels, 3);
  for (AdapterKind kind : {AdapterKind::kMlp, AdapterKind::kConv2, AdapterKind::kConv3}) {
    const PrototypeModel a = init_model(s, t, kind, true, 9);
    const PrototypeModel b = init_model(s, t, kind, true, 9);
    const PrototypeModel c = init_model(s, t, kind, true, 10);
    EXPECT_TRUE(a.bank.image_memory.bit_equal(s.embeddings.to_tensor()));
    EXPECT_TRUE(a.bank.text_memory.bit_equal(t.embeddings.to_tensor()));
    const auto shapes = AdapterParams::weight_shapes(kind, 16);
    ASSERT_EQ(a.adapter.weights.size(), shapes.size());
    bool any_differs = false;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      EXPECT_EQ(a.adapter.weights[i].shape(), shapes[i]);
      EXPECT_TRUE(a.adapter.weights[i].bit_equal(b.adapter.weights[i]));
      any_differs |= !a.adapter.weights[i].bit_equal(c.adapter.weights[i]);
      if (shapes[i].size() == 1) {
        for (float v : a.adapter.weights[i].data()) EXPECT_EQ(v, 0.0f);
      } else {
        const std::size_t fan_in = kind == AdapterKind::kMlp
                                       ? shapes[i][0]
                                       : shapes[i][1] * shapes[i][2] * shapes[i][3];
        const float bound = static_cast<float>(1.0 / std::sqrt(double(fan_in)));
        for (float v : a.adapter.weights[i].data()) EXPECT_LE(std::abs(v), bound);
      }
    }
    EXPECT_TRUE(any_differs);
  }
}

TEST(InitModel, AdapterShapes) {
  using S = std::vector<Shape>;
  EXPECT_EQ(AdapterParams::weight_shapes(AdapterKind::kMlp, 1024),
            (S{{1024, 256}, {256}, {256, 1024}, {1024}}));
  EXPECT_EQ(AdapterParams::weight_shapes(AdapterKind::kConv2, 1024),
            (S{{32, 1, 3, 3}, {32}, {1, 32, 3, 3}, {1}}));
  EXPECT_EQ(AdapterParams::weight_shapes(AdapterKind::kConv3, 1024),
            (S{{32, 1, 3, 3}, {32}, {32, 32, 3, 3}, {32}, {1, 32, 3, 3}, {1}}));
  EXPECT_TRUE(AdapterParams::weight_shapes(AdapterKind::kIdentity, 7).empty());
}

TEST(AdapterKind, ParseRoundTrip) {
  for (AdapterKind k : {AdapterKind::kIdentity, AdapterKind::kMlp, AdapterKind::kConv2,
                        AdapterKind::kConv3}) {
    EXPECT_EQ(parse_adapter_kind(to_string(k)), k);
  }
  EXPECT_ERROR_CODE(parse_adapter_kind("conv4"), ErrorCode::kInvalidArgument);
}

// --- adapters --------------------------------------------------------------

TEST(Adapter, IdentityReturnsInputExactly) {
  const PrototypeModel m = random_model(3, 2, 16, AdapterKind::kIdentity, 4);
  Rng rng(5);
  const Tensor q = unit_rows(7, 16, rng).to_tensor();
  EXPECT_TRUE(adapt_query(m.adapter, q).bit_equal(q));
}

TEST(Adapter, ZeroResidualRatioNormalizesInput) {
  Rng rng(6);
  std::vector<float> raw(4 * 16);
  for (float& v : raw) v = static_cast<float>(rng.uniform(-2, 2));
  const Tensor q = Tensor::matrix(4, 16, raw);
  const Tensor expected = l2_normalize_rows(EmbeddingMatrix(4, 16, raw)).to_tensor();
  for (AdapterKind kind : {AdapterKind::kMlp, AdapterKind::kConv2, AdapterKind::kConv3}) {
    PrototypeModel m = random_model(2, 1, 16, kind, 7);
    m.adapter.residual_ratio = 0.0;
    const Tensor out = adapt_query(m.adapter, q);
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-7);
  }
}

TEST(Adapter, OutputHasUnitNorm) {
  Rng rng(8);
  for (AdapterKind kind : {AdapterKind::kMlp, AdapterKind::kConv2, AdapterKind::kConv3}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      PrototypeModel m = random_model(2, 1, 64, kind, seed);
      for (Tensor& w : m.adapter.weights) {
        for (float& v : w.data()) v = static_cast<float>(rng.normal());
      }
      const Tensor out = adapt_query(m.adapter, unit_rows(5, 64, rng).to_tensor());
      for (std::size_t r = 0; r < out.rows(); ++r) {
        EXPECT_NEAR(row_norm(out.row(r)), 1.0, 1e-6);
      }
    }
  }
}

TEST(Adapter, MatchesReferenceImplementation) {
  Rng rng(10);
  for (AdapterKind kind : {AdapterKind::kMlp, AdapterKind::kConv2, AdapterKind::kConv3}) {
    PrototypeModel m = random_model(2, 1, 16, kind, 11);
    for (std::size_t i = 1; i < m.adapter.weights.size(); i += 2) {
      for (float& v : m.adapter.weights[i].data()) v = static_cast<float>(0.1 * rng.normal());
    }
    const EmbeddingMatrix q = unit_rows(6, 16, rng);
    const Tensor out = adapt_query(m.adapter, q.to_tensor());
    const auto params = reference::params_of(m);
    for (std::size_t r = 0; r < q.rows(); ++r) {
      const reference::Vec expected = reference::adapt(
          kind, m.adapter.residual_ratio, 16, params.adapter,
          reference::Vec(q.row(r).begin(), q.row(r).end()));
      for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(out.at(r, c), expected[c], 1e-6);
    }
  }
}

TEST(Adapter, DimMismatch) {
  const PrototypeModel m = random_model(2, 1, 16, AdapterKind::kMlp, 1);
  EXPECT_ERROR_CODE(adapt_query(m.adapter, Tensor::matrix(1, 9, std::vector<float>(9, 1.0f))),
                    ErrorCode::kDimMismatch);
}

// --- prototypes ------------------------------------------------------------

TEST(Prototypes, SingleRowPerClassIsThatRow) {
  const PrototypeModel m = random_model(4, 1, 8, AdapterKind::kIdentity, 2);
  const PrototypeSet p = compute_prototypes(m.bank);
  EXPECT_TRUE(p.image.bit_equal(m.bank.image_memory));
  EXPECT_TRUE(p.text.bit_equal(m.bank.text_memory));
}

TEST(Prototypes, MeanOfTwoRows) {
  MemoryBank bank;
  bank.image_memory = Tensor::matrix(3, 2, {1, 0, 0, 1, 0.3f, 0.4f});
  bank.text_memory = Tensor::matrix(2, 2, {1, 0, 0, 1});
  bank.image_labels = {0, 0, 1};
  bank.text_labels = {0, 1};
  bank.num_classes = 2;
  const PrototypeSet p = compute_prototypes(bank);
  EXPECT_EQ(p.image.at(0, 0), 0.5f);
  EXPECT_EQ(p.image.at(0, 1), 0.5f);
  EXPECT_EQ(p.image.at(1, 0), 0.3f);
}

TEST(Prototypes, MatchBruteForceMeans) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < n; ++c) labels.push_back(c);
    for (int extra = 0; extra < 10; ++extra) labels.push_back(rng.below(n));
    rng.shuffle(labels.begin(), labels.end());
    const auto img = unit_rows(labels.size(), 12, rng);
    const auto txt = unit_rows(labels.size(), 12, rng);
    const PrototypeModel m =
        init_model(SupportSet::make(img, labels, n), TextPromptBank::make(txt, labels, n),
                   AdapterKind::kIdentity, false, 0);
    const PrototypeSet p = compute_prototypes(m.bank);
    const reference::Vec flat_img = reference::to_vec(m.bank.image_memory);
    const reference::Vec flat_txt = reference::to_vec(m.bank.text_memory);
    for (std::size_t k = 0; k < n; ++k) {
      const auto ei = reference::class_mean(flat_img, labels, k, 12);
      const auto et = reference::class_mean(flat_txt, labels, k, 12);
      for (std::size_t c = 0; c < 12; ++c) {
        EXPECT_NEAR(p.image.at(k, c), ei[c], 1e-6);
        EXPECT_NEAR(p.text.at(k, c), et[c], 1e-6);
      }
    }
  }
}

TEST(Prototypes, ReflectMemoryUpdates) {
  PrototypeModel m = random_model(3, 2, 8, AdapterKind::kIdentity, 13);
  const PrototypeSet before = compute_prototypes(m.bank);
  m.bank.image_memory.at(0, 0) += 1.0f;  // row 0 belongs to class 0
  const PrototypeSet after = compute_prototypes(m.bank);
  EXPECT_NEAR(after.image.at(0, 0) - before.image.at(0, 0), 0.5f, 1e-6);
  EXPECT_TRUE(after.text.bit_equal(before.text));
}

// --- probabilities ---------------------------------------------------------

TEST(ModalityProbs, EquidistantQueryIsUniform) {
  PrototypeSet p;
  p.image = Tensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  p.text = p.image;
  const ModalityProbs mp = modality_probs(p, Tensor::matrix(1, 4, {0, 0, 0, 0}), 3.0);
  for (float v : mp.image.data()) EXPECT_NEAR(v, 0.25, 1e-7);
  for (float v : mp.text.data()) EXPECT_NEAR(v, 0.25, 1e-7);
}

TEST(ModalityProbs, TwoClassHandValue) {
  // Squared distances {0, 1} from the query.
  PrototypeSet p;
  p.image = Tensor::matrix(2, 2, {0, 0, 1, 0});
  p.text = p.image;
  const ModalityProbs mp = modality_probs(p, Tensor::matrix(1, 2, {0, 0}), 1.0);
  const double e = std::exp(-1.0);
  EXPECT_NEAR(mp.image[0], 1.0 / (1.0 + e), 1e-7);
  EXPECT_NEAR(mp.image[1], e / (1.0 + e), 1e-7);
  EXPECT_NEAR(mp.image[0], 0.7311, 5e-5);
  EXPECT_NEAR(mp.image[1], 0.2689, 5e-5);
}

TEST(ModalityProbs, LargeBetaConcentratesOnNearest) {
  PrototypeSet p;
  p.image = Tensor::matrix(3, 2, {1, 0, 0, 1, -1, 0});
  p.text = p.image;
  const Tensor q = Tensor::matrix(1, 2, {0.8f, 0.6f});
  double prev = 0.0;
  for (double beta : {0.1, 1.0, 10.0, 100.0, 1e3}) {
    const float top = modality_probs(p, q, beta).image[0];
    EXPECT_GE(top, prev);
    prev = top;
  }
  EXPECT_NEAR(prev, 1.0, 1e-6);
}

TEST(ModalityProbs, RowsSumToOne) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const PrototypeModel m = random_model(5, 2, 16, AdapterKind::kIdentity, 100 + trial);
    const PrototypeSet p = compute_prototypes(m.bank);
    const ModalityProbs mp =
        modality_probs(p, unit_rows(4, 16, rng).to_tensor(), rng.uniform(0.1, 50));
    for (const Tensor* t : {&mp.image, &mp.text}) {
      for (std::size_t r = 0; r < t->rows(); ++r) {
        double s = 0.0;
        for (float v : t->row(r)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

// --- classification --------------------------------------------------------

TEST(Classify, AlphaOneIsImageHead) {
  Rng rng(15);
  const PrototypeModel m = random_model(4, 3, 16, AdapterKind::kIdentity, 16);
  const PrototypeSet p = compute_prototypes(m.bank);
  const Tensor q = unit_rows(10, 16, rng).to_tensor();
  const Classification c = classify(p, q, {1.0, 4.0});
  EXPECT_TRUE(c.probs.bit_equal(modality_probs(p, q, 4.0).image));
  const Classification c0 = classify(p, q, {0.0, 4.0});
  EXPECT_TRUE(c0.probs.bit_equal(modality_probs(p, q, 4.0).text));
}

TEST(Classify, TieGoesToLowestIndex) {
  const Tensor mixed = mix_probabilities(Tensor::matrix(1, 2, {0.8f, 0.2f}),
                                         Tensor::matrix(1, 2, {0.2f, 0.8f}), 0.5);
  EXPECT_EQ(mixed[0], 0.5f);
  EXPECT_EQ(mixed[1], 0.5f);
  EXPECT_EQ(argmax_rows(mixed), (std::vector<std::size_t>{0}));
  EXPECT_EQ(argmax_rows(Tensor::matrix(1, 3, {0.2f, 0.4f, 0.4f})),
            (std::vector<std::size_t>{1}));
}

TEST(Classify, MixtureIsConvex) {
  Rng rng(17);
  const PrototypeModel m = random_model(6, 2, 16, AdapterKind::kIdentity, 18);
  const PrototypeSet p = compute_prototypes(m.bank);
  const Tensor q = unit_rows(8, 16, rng).to_tensor();
  const ModalityProbs mp = modality_probs(p, q, 6.0);
  for (int i = 0; i <= 10; ++i) {
    const double alpha = i / 10.0;
    const Classification c = classify(p, q, {alpha, 6.0});
    for (std::size_t r = 0; r < 8; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 6; ++k) {
        const float v = c.probs.at(r, k);
        EXPECT_GE(v, 0.0f);
        EXPECT_GE(v, std::min(mp.image.at(r, k), mp.text.at(r, k)) - 1e-7f);
        EXPECT_LE(v, std::max(mp.image.at(r, k), mp.text.at(r, k)) + 1e-7f);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Classify, AlphaOneIsNearestImagePrototype) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PrototypeModel m = random_model(5, 2, 16, AdapterKind::kMlp, seed);
    Rng rng(seed + 50);
    const Tensor q = unit_rows(6, 16, rng).to_tensor();
    const Tensor g = adapt_query(m.adapter, q);
    const PrototypeSet p = compute_prototypes(m.bank);
    const Classification c = classify(p, g, {1.0, 2.0});
    for (std::size_t r = 0; r < 6; ++r) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < 5; ++k) {
        const double d = reference::sq_dist(reference::Vec(g.row(r).begin(), g.row(r).end()),
                                            reference::Vec(p.image.row(k).begin(),
                                                           p.image.row(k).end()));
        if (d < best_d) best_d = d, best = k;
      }
      EXPECT_EQ(c.labels[r], best);
    }
  }
}

TEST(Classify, MatchesMonolithicReference) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (AdapterKind kind : {AdapterKind::kIdentity, AdapterKind::kMlp, AdapterKind::kConv2}) {
      testing::LossProblem pr = testing::random_problem(4, 2, 16, kind, seed);
      const Classification c = classify_queries(pr.model, pr.query_tensor, pr.hp);
      const auto ev = reference::evaluate(pr.model, reference::params_of(pr.model), pr.queries,
                                          pr.hp.alpha, pr.hp.beta);
      for (std::size_t r = 0; r < pr.queries.size(); ++r) {
        const auto& expected = ev.probs[r];
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(c.probs.at(r, k), expected[k], 1e-6);
        const auto best = static_cast<std::size_t>(
            std::max_element(expected.begin(), expected.end()) - expected.begin());
        EXPECT_EQ(c.labels[r], best);
      }
    }
  }
}

TEST(Classify, ClassPermutationPermutesOutputs) {
  Rng rng(19);
  const std::size_t n = 5;
  const auto labels = balanced_labels(n, 2);
  const auto img = unit_rows(labels.size(), 16, rng);
  const auto txt = unit_rows(labels.size(), 16, rng);
  const Tensor q = unit_rows(7, 16, rng).to_tensor();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<std::size_t> relabeled;
  for (std::size_t l : labels) relabeled.push_back(perm[l]);

  const auto model_for = [&](const std::vector<std::size_t>& ls) {
    return init_model(SupportSet::make(img, ls, n), TextPromptBank::make(txt, ls, n),
                      AdapterKind::kIdentity, false, 0);
  };
  for (double beta : {0.5, 5.0, 50.0}) {
    const Classification a = classify_queries(model_for(labels), q, {0.4, beta});
    const Classification b = classify_queries(model_for(relabeled), q, {0.4, beta});
    for (std::size_t r = 0; r < 7; ++r) {
      for (std::size_t k = 0; k < n; ++k) {
        EXPECT_NEAR(b.probs.at(r, perm[k]), a.probs.at(r, k), 1e-7);
      }
    }
  }
}

TEST(Classify, TrainingFreeIsPure) {
  Rng rng(20);
  const PrototypeModel m = random_model(3, 4, 16, AdapterKind::kIdentity, 21);
  const Tensor q = unit_rows(9, 16, rng).to_tensor();
  const Classification a = classify_queries(m, q, {0.3, 7.0});
  const Classification b = classify_queries(m, q, {0.3, 7.0});
  EXPECT_TRUE(a.probs.bit_equal(b.probs));
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Classify, InvalidHyperparams) {
  const PrototypeModel m = random_model(2, 1, 4, AdapterKind::kIdentity, 1);
  const Tensor q = m.bank.image_memory;
  EXPECT_ERROR_CODE(classify_queries(m, q, {1.5, 1.0}), ErrorCode::kInvalidArgument);
  EXPECT_ERROR_CODE(classify_queries(m, q, {0.5, 0.0}), ErrorCode::kInvalidArgument);
}

// --- prototype export ------------------------------------------------------

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    rows.push_back(fields);
  }
  return rows;
}

TEST(ExportPrototypes, RowCountAndHeader) {
  PrototypeSet p{Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::matrix(2, 2, {5, 6, 7, 8})};
  const auto rows = parse_csv(prototypes_csv(p, ClassVocabulary({"mug", "bowl"})));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"class", "modality", "d0", "d1"}));
  EXPECT_EQ(rows[1], (std::vector<std::string>{"mug", "image", "1", "2"}));
  EXPECT_EQ(rows[4], (std::vector<std::string>{"bowl", "text", "7", "8"}));
}

TEST(ExportPrototypes, ValuesRoundTripAndMatchPrototypes) {
  testing::TempDir dir;
  const PrototypeModel m = random_model(3, 2, 16, AdapterKind::kIdentity, 22);
  const PrototypeSet p = compute_prototypes(m.bank);
  const ClassVocabulary vocab({"a", "b", "c"});
  export_prototypes(p, vocab, dir / "protos.csv");
  const auto rows = parse_csv(testing::read_file(dir / "protos.csv"));
  ASSERT_EQ(rows.size(), 1u + 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    const Tensor& src = i < 3 ? p.image : p.text;
    const auto& fields = rows[1 + i];
    ASSERT_EQ(fields.size(), 2u + 16u);
    EXPECT_EQ(fields[0], vocab.name(i % 3));
    EXPECT_EQ(fields[1], i < 3 ? "image" : "text");
    for (std::size_t c = 0; c < 16; ++c) {
      EXPECT_EQ(std::stof(fields[2 + c]), src.at(i % 3, c));
    }
  }
}

TEST(ExportPrototypes, QuotesClassNamesWithCommas) {
  PrototypeSet p{Tensor::matrix(2, 1, {1, 2}), Tensor::matrix(2, 1, {3, 4})};
  const std::string csv = prototypes_csv(p, ClassVocabulary({"mug, red", "say \"hi\""}));
  EXPECT_NE(csv.find("\"mug, red\",image,1"), std::string::npos);
  EXPECT_NE(csv.find("\"say \"\"hi\"\"\",text,4"), std::string::npos);
}

}  // namespace
}  // namespace protofs
