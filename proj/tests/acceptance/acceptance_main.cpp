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
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "protofs/embedding_store.hpp"
#include "protofs/error.hpp"
#include "protofs/evaluator.hpp"
#include "protofs/hparam.hpp"
#include "protofs/losses.hpp"
#include "protofs/model.hpp"
#include "protofs/random.hpp"
#include "protofs/synthetic.hpp"
#include "protofs/trainer.hpp"
#include "reference.hpp"

namespace protofs {
namespace {

namespace fs = std::filesystem;
using reference::Vec;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.clear();
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : ", ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

fs::path scratch_root() {
  static const fs::path root =
      fs::temp_directory_path() / ("protofs_acceptance_" + std::to_string(::getpid()));
  return root;
}

fs::path scratch(const std::string& name) {
  const fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Every regular file under `a` has a byte-identical twin under `b`, and
// neither side has extra files.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  }
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb || fa.empty()) return false;
  for (const auto& rel : fa) {
    if (read_bytes(a / rel) != read_bytes(b / rel)) return false;
  }
  return true;
}

template <typename F>
bool throws_code(F&& f, ErrorCode code) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

template <typename F>
bool throws_any(F&& f) {
  try {
    f();
  } catch (const Error&) {
    return true;
  }
  return false;
}

std::size_t argmin(const Vec& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

std::size_t argmax(const Vec& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

testing::LossProblem instance(std::uint64_t i) {
  static constexpr AdapterKind kKinds[] = {AdapterKind::kIdentity, AdapterKind::kMlp,
                                           AdapterKind::kConv2, AdapterKind::kConv3};
  return testing::random_problem(2 + i % 5, 1 + i % 3, 16, kKinds[i % 4], 1000 + i);
}

// --- criteria -------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  double worst = 0.0;
  std::size_t checked = 0;
  for (AdapterKind kind : {AdapterKind::kMlp, AdapterKind::kConv2}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto r = testing::check_gradients(testing::random_problem(3, 2, 16, kind, seed));
      checked += r.checked;
      worst = std::max(worst, r.max_relative_error);
      o.require(r.max_relative_error < 1e-4, std::string(to_string(kind)) + " seed " +
                                                 std::to_string(seed) + " " + r.worst);
    }
  }
  o.note(std::to_string(checked) + " partials, max rel err " + fmt("%.2e", worst) + " < 1e-4");
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  double worst = 0.0;
  std::size_t mismatches = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto p = instance(i);
    const Classification c = classify_queries(p.model, p.query_tensor, p.hp);
    const auto ev = reference::evaluate(p.model, reference::params_of(p.model), p.queries,
                                        p.hp.alpha, p.hp.beta);
    for (std::size_t r = 0; r < p.queries.size(); ++r) {
      for (std::size_t k = 0; k < ev.probs[r].size(); ++k) {
        worst = std::max(worst, std::abs(double(c.probs.at(r, k)) - ev.probs[r][k]));
      }
      if (c.labels[r] != argmax(ev.probs[r])) ++mismatches;
    }
  }
  o.require(worst < 1e-6, "max abs diff " + fmt("%.3e", worst));
  o.require(mismatches == 0, std::to_string(mismatches) + " argmax mismatches");
  o.note("100 instances, max abs diff " + fmt("%.2e", worst) + " < 1e-6, argmax identical");
  return o;
}

Outcome mixture_endpoints() {
  Outcome o;
  std::size_t queries = 0, wrong = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto p = instance(i);
    const auto params = reference::params_of(p.model);
    const auto ev = reference::evaluate(p.model, params, p.queries, 0.5, p.hp.beta);
    const auto img = classify_queries(p.model, p.query_tensor, {1.0, p.hp.beta}).labels;
    const auto txt = classify_queries(p.model, p.query_tensor, {0.0, p.hp.beta}).labels;
    for (std::size_t r = 0; r < p.queries.size(); ++r) {
      const Vec g = reference::adapt(p.model.adapter.kind, p.model.adapter.residual_ratio,
                                     p.model.dim(), params.adapter, p.queries[r]);
      Vec di, dt;
      for (std::size_t k = 0; k < p.model.num_classes(); ++k) {
        di.push_back(reference::sq_dist(g, ev.image_protos[k]));
        dt.push_back(reference::sq_dist(g, ev.text_protos[k]));
      }
      ++queries;
      if (img[r] != argmin(di)) ++wrong;
      if (txt[r] != argmin(dt)) ++wrong;
    }
  }
  o.require(wrong == 0, std::to_string(wrong) + " endpoint disagreements");
  o.note(std::to_string(queries) + " queries x 2 endpoints agree with nearest-prototype rule");
  return o;
}

Outcome infonce_closed_forms() {
  Outcome o;
  double worst = 0.0;
  for (std::size_t n : {2u, 5u, 10u}) {
    const std::size_t dim = 16;
    Tensor eye(Shape{n, dim});
    for (std::size_t k = 0; k < n; ++k) eye.at(k, k) = 1.0f;
    const PrototypeSet aligned{eye, eye};
    const double expected = std::log(1.0 + double(n - 1) * std::exp(-1.0));
    const double e2 = std::abs(loss_l2(aligned) - expected);
    const double e3 = std::abs(loss_l3(aligned) - expected);

    Tensor same(Shape{n, dim});
    Rng rng(n);
    std::vector<float> v(dim);
    for (float& x : v) x = static_cast<float>(rng.normal());
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t c = 0; c < dim; ++c) same.at(k, c) = v[c];
    }
    const PrototypeSet coincident{same, same};
    const double c2 = std::abs(loss_l2(coincident) - std::log(double(n)));
    const double c3 = std::abs(loss_l3(coincident) - std::log(double(n)));
    const double w = std::max({e2, e3, c2, c3});
    worst = std::max(worst, w);
    o.require(w < 1e-6, "N=" + std::to_string(n) + " error " + fmt("%.3e", w));
  }
  o.note("N in {2,5,10}, max abs err " + fmt("%.2e", worst) + " < 1e-6");
  return o;
}

double mean_alignment(const PrototypeModel& m) {
  const PrototypeSet p = compute_prototypes(m.bank);
  double sum = 0.0;
  for (std::size_t k = 0; k < p.image.rows(); ++k) {
    double d = 0.0, a = 0.0, b = 0.0;
    for (std::size_t c = 0; c < p.image.cols(); ++c) {
      d += double(p.image.at(k, c)) * p.text.at(k, c);
      a += double(p.image.at(k, c)) * p.image.at(k, c);
      b += double(p.text.at(k, c)) * p.text.at(k, c);
    }
    sum += d / std::sqrt(a * b);
  }
  return sum / static_cast<double>(p.image.rows());
}

Outcome synthetic_end_to_end() {
  Outcome o;
  SyntheticSpec spec;
  spec.num_classes = 5;
  spec.support_per_class = 4;
  spec.noise_sigma = 0.01;
  spec.min_center_distance = 1.0;
  spec.seed = 11;
  const SyntheticData data = make_synthetic(spec);
  const Dataset& ds = data.dataset;

  double closest = 1e9;
  for (std::size_t a = 0; a < spec.num_classes; ++a) {
    for (std::size_t b = a + 1; b < spec.num_classes; ++b) {
      closest = std::min(closest, std::sqrt(reference::sq_dist(
                                      Vec(data.image_centers.row(a).begin(),
                                          data.image_centers.row(a).end()),
                                      Vec(data.image_centers.row(b).begin(),
                                          data.image_centers.row(b).end()))));
    }
  }
  o.require(closest > 1.0, "closest centers " + fmt("%.3f", closest));

  // Training-free: identity adapter, alpha/beta searched on validation.
  const PrototypeModel frozen =
      init_model(ds.support, ds.text, AdapterKind::kIdentity, false, spec.seed);
  const GridResult grid = grid_search(frozen, ds.val, GridSpec::defaults());
  const EvalReport tf = evaluate(frozen, ds.test, grid.best, ds.vocab.names());
  o.require(tf.overall_accuracy == 1.0, "training-free accuracy " + fmt("%.4f", tf.overall_accuracy));
  o.note("training-free test acc " + fmt("%.2f", 100.0 * tf.overall_accuracy) + "%");

  for (AdapterKind kind : {AdapterKind::kMlp, AdapterKind::kConv2}) {
    TrainConfig cfg;
    cfg.adapter_kind = kind;
    cfg.train_text = true;
    cfg.epochs = 100;
    cfg.seed = spec.seed;
    const MixtureHyperparams hp{0.5, 5.0};
    const PrototypeModel init = init_model(ds.support, ds.text, kind, true, cfg.seed);
    const double cos0 = mean_alignment(init);
    const TrainResult r = train(init, ds.support, cfg, hp);
    const double first = r.trace.front().total;
    const double last = evaluate_losses(r.model, ds.support, hp, cfg.losses).total;
    const double cos1 = mean_alignment(r.model);
    const std::string name(to_string(kind));
    o.require(cos0 < 0.5, name + " initial alignment " + fmt("%.3f", cos0) + " not < 0.5");
    o.require(last < first, name + " loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last));
    o.require(cos1 > cos0, name + " cos " + fmt("%.3f", cos0) + " -> " + fmt("%.3f", cos1));
    o.note(name + " loss " + fmt("%.3f", first) + "->" + fmt("%.3f", last) + " cos " +
           fmt("%.2f", cos0) + "->" + fmt("%.2f", cos1));
  }
  return o;
}

struct RunArtifacts {
  std::string trace;
  std::string report;
  std::string grid;
};

RunArtifacts pipeline_run(const fs::path& dir, std::size_t threads) {
  SyntheticSpec spec;
  spec.seed = 7;
  spec.support_per_class = 6;
  const Dataset ds = make_synthetic(spec).dataset;
  write_dataset(ds, dir / "data");
  const Dataset loaded = load_dataset(dir / "data" / "dataset.json");
  const Episode ep = sample_episode(loaded.support, {loaded.vocab.size(), 4, 7});

  TrainConfig cfg;
  cfg.adapter_kind = AdapterKind::kConv2;
  cfg.train_text = false;
  cfg.epochs = 30;
  cfg.seed = 7;
  const MixtureHyperparams hp{0.5, 5.0};
  const TrainResult r = fine_tune(ep.support, loaded.text, cfg, hp);
  const GridResult grid = grid_search(r.model, loaded.val, GridSpec::defaults(), threads);

  Checkpoint ckpt;
  ckpt.model = r.model;
  ckpt.hp = grid.best;
  ckpt.config = cfg;
  ckpt.class_names = loaded.vocab.names();
  ckpt.epoch = cfg.epochs;
  ckpt.final_losses = r.trace.back();
  ckpt.hp_source = "search-after";
  save_checkpoint(ckpt, dir / "ckpt");

  ReportConfig rc;
  rc.dataset = loaded.name;
  rc.variant = "fine-tuned";
  rc.adapter = "conv2";
  rc.shots = 4;
  rc.seed = 7;
  const Checkpoint back = load_checkpoint(dir / "ckpt");
  const EvalReport rep = evaluate(back.model, loaded.test, back.hp, back.class_names, rc);
  return {loss_trace_csv(r.trace), rep.to_json_string(), grid_csv(grid)};
}

Outcome determinism() {
  Outcome o;
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  const RunArtifacts ra = pipeline_run(a, 1);
  const RunArtifacts rb = pipeline_run(b, 3);
  o.require(same_tree(a / "data", b / "data"), "dataset containers differ");
  o.require(same_tree(a / "ckpt", b / "ckpt"), "checkpoints differ");
  o.require(ra.trace == rb.trace, "loss traces differ");
  o.require(ra.report == rb.report, "reports differ");
  o.require(ra.grid == rb.grid, "grid tables differ");
  o.note("dataset, checkpoint, loss trace, grid and report bytes identical across 2 runs");
  return o;
}

Outcome format_round_trips() {
  Outcome o;
  Rng rng(3);
  const fs::path dir = scratch("formats");

  // PCE1: random shapes plus awkward values, in memory and through files.
  std::size_t matrices = 0;
  for (std::size_t rows : {0u, 1u, 7u, 100u}) {
    for (std::size_t dim : {1u, 3u, 64u}) {
      std::vector<float> v(rows * dim);
      for (float& x : v) x = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-30, 30)));
      if (!v.empty()) {
        v[0] = -0.0f;
        v[v.size() / 2] = std::numeric_limits<float>::denorm_min();
        v.back() = std::numeric_limits<float>::max();
      }
      const EmbeddingMatrix m(rows, dim, v);
      const fs::path f = dir / "m.pce";
      write_container(m, f);
      const EmbeddingMatrix back = read_container(f);
      const bool exact =
          back.rows() == rows && back.dim() == dim &&
          std::equal(v.begin(), v.end(), back.data().begin(), back.data().end(),
                     [](float x, float y) {
                       return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
                     }) &&
          encode_container(back) == read_bytes(f);
      o.require(exact, "PCE1 " + std::to_string(rows) + "x" + std::to_string(dim) + " not bit-exact");
      ++matrices;
    }
  }

  // PCE1 corruption: every strict prefix, bad magic, trailing bytes, NaN.
  const std::string good = encode_container(EmbeddingMatrix(3, 4, std::vector<float>(12, 0.5f)));
  std::size_t prefixes_ok = 0;
  for (std::size_t len = 0; len < good.size(); ++len) {
    if (throws_code([&] { decode_container(good.substr(0, len)); }, ErrorCode::kTruncated)) {
      ++prefixes_ok;
    }
  }
  o.require(prefixes_ok == good.size(), "a truncated container decoded without Truncated");
  std::string bad = good;
  bad[0] = 'X';
  o.require(throws_code([&] { decode_container(bad); }, ErrorCode::kBadMagic), "bad magic");
  o.require(throws_code([&] { decode_container(good + "x"); }, ErrorCode::kTruncated),
            "trailing bytes");
  bad = good;
  const std::uint32_t nan_bits = 0x7FC00000u;
  for (int i = 0; i < 4; ++i) bad[kContainerHeaderBytes + i] = char((nan_bits >> (8 * i)) & 0xFF);
  o.require(throws_code([&] { decode_container(bad); }, ErrorCode::kNonFinite), "NaN payload");

  // Checkpoints for every adapter kind.
  const Dataset ds = make_synthetic(SyntheticSpec{}).dataset;
  for (AdapterKind kind : {AdapterKind::kIdentity, AdapterKind::kMlp, AdapterKind::kConv2,
                           AdapterKind::kConv3}) {
    TrainConfig cfg;
    cfg.adapter_kind = kind;
    cfg.epochs = 2;
    cfg.seed = 4;
    cfg.train_text = true;
    Checkpoint ckpt;
    ckpt.model = fine_tune(ds.support, ds.text, cfg, {0.35, 7.25}).model;
    ckpt.hp = {0.35, 7.25};
    ckpt.config = cfg;
    ckpt.class_names = ds.vocab.names();
    ckpt.epoch = 2;
    const fs::path cdir = dir / ("ckpt_" + std::string(to_string(kind)));
    save_checkpoint(ckpt, cdir);
    const Checkpoint back = load_checkpoint(cdir);
    bool exact = back.model.bank.image_memory.bit_equal(ckpt.model.bank.image_memory) &&
                 back.model.bank.text_memory.bit_equal(ckpt.model.bank.text_memory) &&
                 back.model.bank.image_labels == ckpt.model.bank.image_labels &&
                 back.model.bank.text_labels == ckpt.model.bank.text_labels &&
                 back.model.adapter.weights.size() == ckpt.model.adapter.weights.size() &&
                 back.hp.alpha == ckpt.hp.alpha && back.hp.beta == ckpt.hp.beta &&
                 back.class_names == ckpt.class_names;
    for (std::size_t i = 0; exact && i < back.model.adapter.weights.size(); ++i) {
      exact = back.model.adapter.weights[i].bit_equal(ckpt.model.adapter.weights[i]);
    }
    o.require(exact, std::string(to_string(kind)) + " checkpoint not bit-exact");

    // Corrupt each byte of the text memory file in turn.
    const fs::path tm = cdir / "text_memory.pce";
    const std::string original = read_bytes(tm);
    std::size_t undetected = 0;
    for (std::size_t i = 0; i < original.size(); i += 7) {
      std::string flipped = original;
      flipped[i] = char(flipped[i] ^ 0x10);
      write_bytes(tm, flipped);
      if (!throws_any([&] { load_checkpoint(cdir); })) ++undetected;
    }
    write_bytes(tm, original.substr(0, original.size() - 3));
    if (!throws_code([&] { load_checkpoint(cdir); }, ErrorCode::kCorruptCheckpoint)) ++undetected;
    write_bytes(tm, original);
    o.require(undetected == 0, std::to_string(undetected) + " corrupted " +
                                   std::string(to_string(kind)) + " checkpoints loaded");
  }
  const fs::path cdir = dir / "ckpt_mlp";
  std::string header = read_bytes(cdir / "header.json");
  const auto pos = header.find("\"version\": 1");
  o.require(pos != std::string::npos, "header has no version field");
  if (pos != std::string::npos) {
    header.replace(pos, 12, "\"version\": 2");
    write_bytes(cdir / "header.json", header);
    o.require(throws_code([&] { load_checkpoint(cdir); }, ErrorCode::kVersionMismatch),
              "version bump not rejected");
  }
  fs::remove(cdir / "header.json");
  o.require(throws_code([&] { load_checkpoint(cdir); }, ErrorCode::kMissingFile),
            "missing header");

  o.note(std::to_string(matrices) + " PCE1 matrices and 4 checkpoint kinds bit-exact; " +
         "all corruptions typed");
  return o;
}

Outcome beta_scaling() {
  Outcome o;
  const double c = 2.0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.noise_sigma = 0.2;
    const Dataset ds = make_synthetic(spec).dataset;
    const PrototypeModel m = init_model(ds.support, ds.text, AdapterKind::kIdentity, false, seed);
    PrototypeModel s = m;
    for (float& v : s.bank.image_memory.data()) v *= static_cast<float>(c);
    for (float& v : s.bank.text_memory.data()) v *= static_cast<float>(c);
    const Tensor q = ds.test.embeddings.to_tensor();
    Tensor qs = q;
    for (float& v : qs.data()) v *= static_cast<float>(c);
    const Tensor aq = adapt_query(m.adapter, q);
    const Tensor aqs = adapt_query(s.adapter, qs);
    for (double beta : GridSpec::defaults().betas) {
      const ModalityProbs p = modality_probs(compute_prototypes(m.bank), aq, beta);
      const ModalityProbs ps = modality_probs(compute_prototypes(s.bank), aqs, beta / (c * c));
      for (std::size_t i = 0; i < p.image.numel(); ++i) {
        worst = std::max(worst, std::abs(double(p.image[i]) - ps.image[i]));
        worst = std::max(worst, std::abs(double(p.text[i]) - ps.text[i]));
      }
    }
  }
  o.require(worst < 1e-5, "max abs diff " + fmt("%.3e", worst));
  o.note("c=2, 3 datasets x 20 betas, max abs diff " + fmt("%.2e", worst) + " < 1e-5");
  return o;
}

struct Criterion {
  const char* name;
  Outcome (*run)();
  double time_limit_s;  // <= 0 means none
};

}  // namespace
}  // namespace protofs

int main() {
  using namespace protofs;
  const Criterion criteria[] = {
      {"gradient_correctness", gradient_correctness, 30.0},
      {"oracle_equivalence", oracle_equivalence, 10.0},
      {"mixture_endpoints", mixture_endpoints, 0.0},
      {"infonce_closed_forms", infonce_closed_forms, 0.0},
      {"synthetic_end_to_end", synthetic_end_to_end, 60.0},
      {"determinism", determinism, 0.0},
      {"format_round_trips", format_round_trips, 0.0},
      {"beta_scaling_identity", beta_scaling, 0.0},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("unexpected exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2f s", secs);
    if (c.time_limit_s > 0) {
      timing += fmt(" (limit %.0f s)", c.time_limit_s);
      if (secs >= c.time_limit_s) {
        o.pass = false;
        o.detail += "; exceeded time limit";
      }
    }
    if (!o.pass) ++failures;
    std::printf("%s %-22s %s [%s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  std::filesystem::remove_all(scratch_root(), ec);
  std::printf("%d of %zu criteria failed\n", failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
