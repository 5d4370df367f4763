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
#include "cli/commands.hpp"

#include <cstdio>
#include <string>

#include "cli/run_context.hpp"
#include "protofs/embedding_store.hpp"
#include "protofs/error.hpp"
#include "protofs/evaluator.hpp"
#include "protofs/hparam.hpp"
#include "protofs/losses.hpp"
#include "protofs/model.hpp"
#include "protofs/synthetic.hpp"
#include "protofs/trainer.hpp"

namespace protofs::cli {
namespace {

fs::path manifest_for(const fs::path& flag, const fs::path& primary) {
  return flag.empty() ? default_manifest_path(primary) : flag;
}

std::string absolute_string(const fs::path& p) {
  return fs::absolute(p).lexically_normal().string();
}

Dataset load_data(const std::string& arg, RunRecord& rec) {
  const fs::path manifest = resolve_dataset(arg);
  rec.input_dataset(manifest);
  rec.config()["data"] = absolute_string(manifest);
  return load_dataset(manifest);
}

Checkpoint load_ckpt(const fs::path& dir, RunRecord& rec) {
  Checkpoint ck = load_checkpoint(dir);
  rec.input_dir(dir);
  rec.config()["checkpoint"] = absolute_string(dir);
  return ck;
}

void check_compatible(const Checkpoint& ck, const Dataset& ds) {
  if (ck.model.dim() != ds.support.embeddings.dim()) {
    throw Error(ErrorCode::kDimMismatch, "checkpoint dim " + std::to_string(ck.model.dim()) +
                                             " vs dataset dim " +
                                             std::to_string(ds.support.embeddings.dim()));
  }
  if (ck.class_names != ds.vocab.names()) {
    throw Error(ErrorCode::kBadManifest, "checkpoint classes differ from the dataset's");
  }
}

// Rows per class when every class has the same count, else 0.
std::size_t uniform_count(const std::vector<std::size_t>& labels, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t l : labels) ++counts.at(l);
  for (std::size_t c : counts) {
    if (c != counts.front()) return 0;
  }
  return counts.empty() ? 0 : counts.front();
}

struct Support {
  SupportSet set;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
};

Support select_support(const Dataset& ds, std::optional<std::size_t> shots,
                       std::optional<std::uint64_t> seed, RunRecord& rec) {
  if (!shots) {
    return {ds.support, uniform_count(ds.support.labels, ds.vocab.size()), seed.value_or(0)};
  }
  if (!seed) throw UsageError("--shots needs an explicit --seed");
  Episode ep = sample_episode(ds.support, {ds.vocab.size(), *shots, *seed});
  rec.seed("episode", *seed);
  rec.config()["shots"] = *shots;
  return {std::move(ep.support), *shots, *seed};
}

PrototypeModel training_free(const SupportSet& support, const Dataset& ds) {
  return init_model(support, ds.text, AdapterKind::kIdentity, false, 0);
}

std::optional<MixtureHyperparams> flag_hp(std::optional<double> alpha,
                                          std::optional<double> beta) {
  if (alpha.has_value() != beta.has_value()) {
    throw UsageError("--alpha and --beta must be given together");
  }
  if (!alpha) return std::nullopt;
  MixtureHyperparams hp{*alpha, *beta};
  hp.validate();
  return hp;
}

json hp_json(const MixtureHyperparams& hp, const std::string& source) {
  return {{"alpha", hp.alpha}, {"beta", hp.beta}, {"source", source}};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

bool same_model(const PrototypeModel& a, const PrototypeModel& b) {
  if (!a.bank.image_memory.bit_equal(b.bank.image_memory) ||
      !a.bank.text_memory.bit_equal(b.bank.text_memory) ||
      a.adapter.weights.size() != b.adapter.weights.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.adapter.weights.size(); ++i) {
    if (!a.adapter.weights[i].bit_equal(b.adapter.weights[i])) return false;
  }
  return true;
}

void write_dataset_verified(const Dataset& ds, const fs::path& dir) {
  const fs::path manifest = write_dataset(ds, dir);
  const Dataset back = load_dataset(manifest, LoadOptions{false});
  if (!(back.support.embeddings == ds.support.embeddings &&
        back.text.embeddings == ds.text.embeddings && back.val.embeddings == ds.val.embeddings &&
        back.test.embeddings == ds.test.embeddings && back.vocab.names() == ds.vocab.names())) {
    throw Error(ErrorCode::kIo, "dataset read-back mismatch in " + dir.string());
  }
}

}  // namespace

void cmd_ingest(const IngestOptions& o, const Args& args) {
  RunRecord rec("ingest", args);
  IngestSources src = o.sources;
  if (src.name.empty()) src.name = fs::absolute(o.out).lexically_normal().filename().string();
  for (const fs::path& p : {src.classes, src.support, src.text, src.val, src.test}) {
    rec.input_file(p);
  }
  for (const auto& p : {src.support_labels, src.text_labels, src.val_labels, src.test_labels,
                        src.prompts}) {
    if (p) rec.input_file(*p);
  }
  const Dataset ds = build_dataset(src);
  rec.config() = {{"name", ds.name},
                  {"classes", ds.vocab.size()},
                  {"dim", ds.support.embeddings.dim()},
                  {"support_rows", ds.support.embeddings.rows()},
                  {"text_rows", ds.text.embeddings.rows()},
                  {"val_rows", ds.val.embeddings.rows()},
                  {"test_rows", ds.test.embeddings.rows()},
                  {"out", absolute_string(o.out)}};

  OutputSet outputs;
  write_dataset_verified(ds, outputs.add_dir(o.out));
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::printf("ingested %s: %zu classes, dim %zu, %zu support rows\n", ds.name.c_str(),
              ds.vocab.size(), ds.support.embeddings.dim(), ds.support.embeddings.rows());
}

void cmd_eval(const EvalOptions& o, const Args& args) {
  RunRecord rec("eval", args);
  const Dataset ds = load_data(o.data, rec);
  const QuerySet& queries = o.split == "val" ? ds.val : ds.test;

  ReportConfig rc;
  rc.dataset = ds.name;
  rc.split = o.split;
  rc.variant = o.variant;
  PrototypeModel model;
  std::optional<MixtureHyperparams> stored_hp;
  if (o.variant == "training-free") {
    if (!o.checkpoint.empty()) throw UsageError("--checkpoint needs --variant fine-tuned");
    const Support s = select_support(ds, o.shots, o.seed, rec);
    model = training_free(s.set, ds);
    rc.adapter = "identity";
    rc.shots = s.shots;
    rc.seed = s.seed;
  } else {
    if (o.checkpoint.empty()) throw UsageError("--variant fine-tuned needs --checkpoint");
    if (o.shots) throw UsageError("--shots is fixed by the checkpoint");
    const Checkpoint ck = load_ckpt(o.checkpoint, rec);
    check_compatible(ck, ds);
    model = ck.model;
    stored_hp = ck.hp;
    rc.adapter = std::string(to_string(ck.model.adapter.kind));
    rc.losses = ck.config.losses.to_string();
    rc.train_text = ck.model.bank.train_text;
    rc.shots = uniform_count(ck.model.bank.image_labels, ck.model.num_classes());
    rc.seed = ck.config.seed;
  }

  MixtureHyperparams hp;
  std::string source;
  const auto flags = flag_hp(o.alpha, o.beta);
  if (flags && o.search) throw UsageError("give either --alpha/--beta or --search");
  if (flags) {
    hp = *flags;
    source = "flags";
  } else if (stored_hp && !o.search) {
    hp = *stored_hp;
    source = "checkpoint";
  } else {
    hp = grid_search(model, ds.val, GridSpec::defaults(), o.threads).best;
    source = "search";
  }

  const EvalReport report = evaluate(model, queries, hp, ds.vocab.names(), rc);
  rec.config()["variant"] = o.variant;
  rec.config()["split"] = o.split;
  rec.config()["hyperparams"] = hp_json(hp, source);
  rec.config()["shots"] = rc.shots;
  rec.config()["threads"] = o.threads;
  rec.config()["out"] = absolute_string(o.out);
  rec.seed("seed", rc.seed);

  OutputSet outputs;
  const std::string text = report.to_json_string();
  const fs::path staged = outputs.add_file(o.out);
  write_verified(staged, text);
  if (EvalReport::parse_json(read_text(staged)).to_json_string() != text) {
    throw Error(ErrorCode::kIo, "report does not round-trip: " + o.out.string());
  }
  if (!o.markdown.empty()) {
    rec.config()["markdown"] = absolute_string(o.markdown);
    write_verified(outputs.add_file(o.markdown), report.markdown_row() + "\n");
  }
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::printf("%s %s accuracy %s%% on %zu queries (alpha %g, beta %g, %s)\n",
              o.variant.c_str(), o.split.c_str(), fmt("%.2f", 100.0 * report.overall_accuracy).c_str(),
              report.num_queries, hp.alpha, hp.beta, source.c_str());
}

void cmd_train(const TrainOptions& o, const Args& args) {
  RunRecord rec("train", args);
  const Dataset ds = load_data(o.data, rec);
  const Support s = select_support(ds, o.shots, o.seed, rec);

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.learning_rate;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.losses = LossConfig::parse(o.losses);
  cfg.train_text = o.train_text == "true";
  cfg.adapter_kind = parse_adapter_kind(o.adapter);
  cfg.residual_ratio = o.residual_ratio;
  cfg.validate();
  if (cfg.epochs < 1) throw UsageError("--epochs must be at least 1");

  const auto flags = flag_hp(o.alpha, o.beta);
  const std::string mode = o.search.value_or(flags ? "none" : "before");
  const bool before = mode == "before" || mode == "both";
  const bool after = mode == "after" || mode == "both";
  if (before && flags) throw UsageError("--search " + mode + " picks alpha/beta itself");
  if (!before && !flags) throw UsageError("--search " + mode + " needs --alpha and --beta");

  std::optional<GridResult> grid_before, grid_after;
  MixtureHyperparams hp_train;
  if (before) {
    const PrototypeModel init = init_model(s.set, ds.text, cfg.adapter_kind, cfg.train_text,
                                           cfg.seed, cfg.residual_ratio);
    grid_before = grid_search(init, ds.val, GridSpec::defaults(), o.threads);
    hp_train = grid_before->best;
  } else {
    hp_train = *flags;
  }
  const TrainResult result = fine_tune(s.set, ds.text, cfg, hp_train);

  Checkpoint ck;
  ck.model = result.model;
  ck.hp = hp_train;
  ck.hp_source = before ? "search-before" : "flags";
  if (after) {
    grid_after = grid_search(result.model, ds.val, GridSpec::defaults(), o.threads);
    ck.hp = grid_after->best;
    ck.hp_source = before ? "search-both" : "search-after";
  }
  ck.config = cfg;
  ck.class_names = ds.vocab.names();
  ck.epoch = cfg.epochs;
  const StepLosses fin = evaluate_losses(result.model, s.set, hp_train, cfg.losses);
  ck.final_losses = LossRecord{cfg.epochs, fin.l1, fin.l2, fin.l3, fin.total};

  rec.seed("seed", cfg.seed);
  rec.config()["adapter"] = o.adapter;
  rec.config()["train_text"] = cfg.train_text;
  rec.config()["losses"] = cfg.losses.to_string();
  rec.config()["shots"] = s.shots;
  rec.config()["epochs"] = cfg.epochs;
  rec.config()["learning_rate"] = cfg.learning_rate;
  rec.config()["adam"] = {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  rec.config()["batch_size"] = cfg.batch_size;
  rec.config()["residual_ratio"] = cfg.residual_ratio;
  rec.config()["search"] = mode;
  rec.config()["train_hyperparams"] = hp_json(hp_train, before ? "search-before" : "flags");
  rec.config()["hyperparams"] = hp_json(ck.hp, ck.hp_source);
  rec.config()["threads"] = o.threads;
  rec.config()["out"] = absolute_string(o.out);

  OutputSet outputs;
  const fs::path staged = outputs.add_dir(o.out);
  save_checkpoint(ck, staged);
  write_verified(staged / "loss_trace.csv", loss_trace_csv(result.trace));
  if (grid_before) write_verified(staged / "grid_before.csv", grid_csv(*grid_before));
  if (grid_after) write_verified(staged / "grid_after.csv", grid_csv(*grid_after));
  const Checkpoint back = load_checkpoint(staged);
  if (!same_model(back.model, ck.model) || back.hp.alpha != ck.hp.alpha ||
      back.hp.beta != ck.hp.beta) {
    throw Error(ErrorCode::kIo, "checkpoint read-back mismatch in " + o.out.string());
  }
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::printf("trained %s for %zu epochs: loss %s -> %s; alpha %g, beta %g (%s)\n",
              o.adapter.c_str(), cfg.epochs, fmt("%.4f", result.trace.front().total).c_str(),
              fmt("%.4f", fin.total).c_str(), ck.hp.alpha, ck.hp.beta, ck.hp_source.c_str());
}

void cmd_search(const SearchOptions& o, const Args& args) {
  RunRecord rec("search", args);
  const Dataset ds = load_data(o.data, rec);
  PrototypeModel model;
  if (!o.checkpoint.empty()) {
    if (o.shots) throw UsageError("--shots is fixed by the checkpoint");
    const Checkpoint ck = load_ckpt(o.checkpoint, rec);
    check_compatible(ck, ds);
    model = ck.model;
  } else {
    const Support s = select_support(ds, o.shots, o.seed, rec);
    model = training_free(s.set, ds);
  }
  GridSpec grid = GridSpec::defaults();
  if (!o.alphas.empty()) grid.alphas = o.alphas;
  if (!o.betas.empty()) grid.betas = o.betas;
  grid.validate();
  const GridResult result = grid_search(model, ds.val, grid, o.threads);

  rec.config()["alphas"] = grid.alphas;
  rec.config()["betas"] = grid.betas;
  rec.config()["threads"] = o.threads;
  rec.config()["out"] = absolute_string(o.out);
  const json best = {{"alpha", result.best.alpha},
                     {"beta", result.best.beta},
                     {"accuracy", result.best_accuracy}};
  rec.config()["best"] = best;

  OutputSet outputs;
  write_verified(outputs.add_file(o.out), grid_csv(result));
  const fs::path best_out = o.best_out.empty()
                                ? fs::path(o.out).replace_extension(".best.json")
                                : o.best_out;
  write_verified(outputs.add_file(best_out), best.dump(2) + "\n");
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::printf("best alpha %g, beta %g: validation accuracy %s%%\n", result.best.alpha,
              result.best.beta, fmt("%.2f", 100.0 * result.best_accuracy).c_str());
}

void cmd_predict(const PredictOptions& o, const Args& args) {
  RunRecord rec("predict", args);
  PrototypeModel model;
  std::vector<std::string> names;
  std::optional<MixtureHyperparams> hp = flag_hp(o.alpha, o.beta);
  std::string source = hp ? "flags" : "checkpoint";
  if (!o.checkpoint.empty()) {
    if (!o.data.empty()) throw UsageError("give either --checkpoint or --data");
    const Checkpoint ck = load_ckpt(o.checkpoint, rec);
    model = ck.model;
    names = ck.class_names;
    if (!hp) hp = ck.hp;
  } else {
    const Dataset ds = load_data(o.data, rec);
    if (!hp) throw UsageError("training-free prediction needs --alpha and --beta");
    model = training_free(ds.support, ds);
    names = ds.vocab.names();
  }
  rec.input_file(o.queries);
  const EmbeddingMatrix queries = l2_normalize_rows(read_container(o.queries));
  if (queries.dim() != model.dim()) {
    throw Error(ErrorCode::kDimMismatch, o.queries.string() + " has dim " +
                                             std::to_string(queries.dim()) + ", model has dim " +
                                             std::to_string(model.dim()));
  }
  const Classification c = classify_queries(model, queries.to_tensor(), *hp);

  std::string csv = "row,label,class";
  for (std::size_t k = 0; k < names.size(); ++k) csv += ",p" + std::to_string(k);
  csv += "\n";
  for (std::size_t r = 0; r < c.labels.size(); ++r) {
    csv += std::to_string(r) + "," + std::to_string(c.labels[r]) + "," +
           csv_field(names.at(c.labels[r]));
    for (std::size_t k = 0; k < names.size(); ++k) csv += "," + format_float(c.probs.at(r, k));
    csv += "\n";
  }
  rec.config()["queries"] = absolute_string(o.queries);
  rec.config()["hyperparams"] = hp_json(*hp, source);
  rec.config()["out"] = absolute_string(o.out);

  OutputSet outputs;
  write_verified(outputs.add_file(o.out), csv);
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::printf("classified %zu queries\n", c.labels.size());
}

void cmd_export(const ExportOptions& o, const Args& args) {
  RunRecord rec("export", args);
  PrototypeSet protos;
  ClassVocabulary vocab;
  if (!o.checkpoint.empty()) {
    if (!o.data.empty() || o.shots) throw UsageError("--checkpoint excludes --data and --shots");
    const Checkpoint ck = load_ckpt(o.checkpoint, rec);
    protos = compute_prototypes(ck.model.bank);
    vocab = ClassVocabulary(ck.class_names);
  } else {
    const Dataset ds = load_data(o.data, rec);
    const Support s = select_support(ds, o.shots, o.seed, rec);
    protos = compute_prototypes(training_free(s.set, ds).bank);
    vocab = ds.vocab;
  }
  rec.config()["out"] = absolute_string(o.out);
  OutputSet outputs;
  write_verified(outputs.add_file(o.out), prototypes_csv(protos, vocab));
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::printf("exported %zu x 2 prototypes\n", vocab.size());
}

void cmd_report(const ReportOptions& o, const Args& args) {
  RunRecord rec("report", args);
  std::vector<EvalReport> reports;
  for (const fs::path& p : o.inputs) {
    rec.input_file(p);
    try {
      reports.push_back(EvalReport::parse_json(read_text(p)));
    } catch (const Error& e) {
      throw Error(e.code(), p.string() + ": " + e.what());
    }
  }
  const std::string table = report_table(reports);
  rec.config()["reports"] = reports.size();
  rec.config()["out"] = absolute_string(o.out);
  OutputSet outputs;
  write_verified(outputs.add_file(o.out), table);
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::fputs(table.c_str(), stdout);
}

void cmd_synth(const SynthOptions& o, const Args& args) {
  RunRecord rec("synth", args);
  SyntheticSpec spec;
  spec.num_classes = o.classes;
  spec.dim = o.dim;
  spec.support_per_class = o.shots;
  spec.val_per_class = o.val_per_class;
  spec.test_per_class = o.test_per_class;
  spec.prompts_per_class = o.prompts_per_class;
  spec.noise_sigma = o.sigma;
  spec.min_center_distance = o.min_center_distance;
  spec.text_alignment = o.text_alignment;
  spec.text_is_noise = o.text_noise;
  spec.seed = o.seed;
  Dataset ds = make_synthetic(spec).dataset;
  ds.name = o.name.empty() ? fs::absolute(o.out).lexically_normal().filename().string() : o.name;

  rec.seed("seed", o.seed);
  rec.config() = {{"name", ds.name},
                  {"classes", o.classes},
                  {"dim", o.dim},
                  {"shots", o.shots},
                  {"val_per_class", o.val_per_class},
                  {"test_per_class", o.test_per_class},
                  {"prompts_per_class", o.prompts_per_class},
                  {"sigma", o.sigma},
                  {"min_center_distance", o.min_center_distance},
                  {"text_alignment", o.text_alignment},
                  {"text_noise", o.text_noise},
                  {"out", absolute_string(o.out)}};
  OutputSet outputs;
  write_dataset_verified(ds, outputs.add_dir(o.out));
  rec.finish(outputs, manifest_for(o.run_manifest, o.out));
  std::printf("wrote synthetic dataset %s: %zu classes, dim %zu\n", ds.name.c_str(), o.classes,
              o.dim);
}

}  // namespace protofs::cli
