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
#include "cli/app.hpp"

#include <cstdio>
#include <cstdlib>
#include <functional>

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "cli/run_context.hpp"
#include "protofs/digest.hpp"

namespace protofs::cli {
namespace {

class NotReproduced : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kAdapters = {"identity", "mlp", "conv2", "conv3"};

void add_data(CLI::App* cmd, std::string& data) {
  cmd->add_option("--data", data,
                  "Dataset directory or dataset.json (default root: $PROTO_DATA_DIR)");
}

void add_manifest(CLI::App* cmd, std::filesystem::path& path) {
  cmd->add_option("--run-manifest", path, "Run manifest path (default: next to the output)");
}

// Restores the working directory and PROTO_DATA_DIR on scope exit.
class EnvironmentGuard {
 public:
  EnvironmentGuard() : cwd_(fs::current_path()) {
    if (const char* v = std::getenv("PROTO_DATA_DIR")) data_dir_ = v;
  }
  ~EnvironmentGuard() {
    std::error_code ec;
    fs::current_path(cwd_, ec);
    if (data_dir_) {
      ::setenv("PROTO_DATA_DIR", data_dir_->c_str(), 1);
    } else {
      ::unsetenv("PROTO_DATA_DIR");
    }
  }

 private:
  fs::path cwd_;
  std::optional<std::string> data_dir_;
};

int rerun(const fs::path& manifest_path) {
  json m;
  try {
    m = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadManifest, manifest_path.string() + ": " + e.what());
  }
  std::vector<std::string> args;
  json outputs;
  try {
    if (m.at("tool").get<std::string>() != "protofs") {
      throw Error(ErrorCode::kBadManifest, manifest_path.string() + " is not a protofs run");
    }
    args = m.at("argv").get<std::vector<std::string>>();
    outputs = m.at("outputs");
    for (const json& in : m.at("inputs")) {
      const auto path = in.at("path").get<std::string>();
      if (!fs::exists(path) || sha256_file(path) != in.at("sha256").get<std::string>()) {
        throw NotReproduced("input changed since the recorded run: " + path);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadManifest, manifest_path.string() + ": " + e.what());
  }
  if (args.empty() || args.front() == "rerun") {
    throw Error(ErrorCode::kBadManifest, manifest_path.string() + ": no command to rerun");
  }

  int status;
  {
    EnvironmentGuard guard;
    fs::current_path(m.at("cwd").get<std::string>());
    const json& dir = m.at("env").at("PROTO_DATA_DIR");
    if (dir.is_string()) {
      ::setenv("PROTO_DATA_DIR", dir.get<std::string>().c_str(), 1);
    } else {
      ::unsetenv("PROTO_DATA_DIR");
    }
    status = run(args);
    if (status != kExitOk) return status;
    for (const json& out : outputs) {
      fs::path path = out.at("path").get<std::string>();
      if (!fs::exists(path) || sha256_file(path) != out.at("sha256").get<std::string>()) {
        throw NotReproduced("output differs from the recorded run: " + path.string());
      }
    }
  }
  std::printf("reproduced %zu outputs\n", outputs.size());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Few-shot prototype classification over precomputed embeddings", "protofs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  std::function<int()> action;

  IngestOptions ingest;
  auto* c = app.add_subcommand("ingest", "Convert CSV or PCE1 inputs into a dataset directory");
  c->add_option("--out", ingest.out, "Dataset directory to create")->required();
  c->add_option("--name", ingest.sources.name, "Dataset name (default: directory name)");
  c->add_option("--classes", ingest.sources.classes, "Class names, one per line")
      ->required()->check(CLI::ExistingFile);
  c->add_option("--support", ingest.sources.support, "Support embeddings")->required();
  c->add_option("--text", ingest.sources.text, "Text prompt embeddings")->required();
  c->add_option("--val", ingest.sources.val, "Validation embeddings")->required();
  c->add_option("--test", ingest.sources.test, "Test embeddings")->required();
  c->add_option("--support-labels", ingest.sources.support_labels, "Labels for a PCE1 support file");
  c->add_option("--text-labels", ingest.sources.text_labels, "Labels for a PCE1 text file");
  c->add_option("--val-labels", ingest.sources.val_labels, "Labels for a PCE1 validation file");
  c->add_option("--test-labels", ingest.sources.test_labels, "Labels for a PCE1 test file");
  c->add_option("--prompts", ingest.sources.prompts, "Prompt strings, one per text row");
  add_manifest(c, ingest.run_manifest);
  c->callback([&] { action = [&] { cmd_ingest(ingest, args); return kExitOk; }; });

  EvalOptions eval;
  c = app.add_subcommand("eval", "Evaluate the training-free or a fine-tuned model");
  add_data(c, eval.data);
  c->add_option("--variant", eval.variant)
      ->check(CLI::IsMember({"training-free", "fine-tuned"}))->capture_default_str();
  c->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory (fine-tuned)");
  c->add_option("--alpha", eval.alpha, "Image/text mixture weight");
  c->add_option("--beta", eval.beta, "Softmax sharpness");
  c->add_flag("--search", eval.search, "Pick alpha/beta by grid search on validation");
  c->add_option("--split", eval.split)->check(CLI::IsMember({"val", "test"}))->capture_default_str();
  c->add_option("--shots", eval.shots, "Sample K support rows per class")->check(CLI::PositiveNumber);
  c->add_option("--seed", eval.seed, "Episode seed");
  c->add_option("--threads", eval.threads)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--out", eval.out, "Report JSON")->required();
  c->add_option("--markdown", eval.markdown, "Also write the report's table row");
  add_manifest(c, eval.run_manifest);
  c->callback([&] { action = [&] { cmd_eval(eval, args); return kExitOk; }; });

  TrainOptions train;
  c = app.add_subcommand("train", "Fine-tune memories and adapter into a checkpoint");
  add_data(c, train.data);
  c->add_option("--out", train.out, "Checkpoint directory")->required();
  c->add_option("--adapter", train.adapter)->check(CLI::IsMember(kAdapters))->capture_default_str();
  c->add_option("--train-text", train.train_text)
      ->check(CLI::IsMember({"true", "false"}))->capture_default_str();
  c->add_option("--losses", train.losses, "Loss terms, e.g. l1,l2,l3")->capture_default_str();
  c->add_option("--shots", train.shots, "Sample K support rows per class")->check(CLI::PositiveNumber);
  c->add_option("--seed", train.seed, "Seed for episode sampling and initialization")->required();
  c->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--lr", train.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--batch-size", train.batch_size, "0 trains on the full support set")
      ->capture_default_str();
  c->add_option("--residual-ratio", train.residual_ratio)
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c->add_option("--alpha", train.alpha);
  c->add_option("--beta", train.beta);
  c->add_option("--search", train.search,
                "When to grid-search alpha/beta (default: none with --alpha/--beta, else before)")
      ->check(CLI::IsMember({"none", "before", "after", "both"}));
  c->add_option("--threads", train.threads)->check(CLI::PositiveNumber)->capture_default_str();
  add_manifest(c, train.run_manifest);
  c->callback([&] { action = [&] { cmd_train(train, args); return kExitOk; }; });

  SearchOptions search;
  c = app.add_subcommand("search", "Grid-search alpha/beta on the validation split");
  add_data(c, search.data);
  c->add_option("--checkpoint", search.checkpoint, "Search for a fine-tuned model");
  c->add_option("--shots", search.shots)->check(CLI::PositiveNumber);
  c->add_option("--seed", search.seed);
  c->add_option("--alphas", search.alphas, "Comma-separated alpha values")->delimiter(',');
  c->add_option("--betas", search.betas, "Comma-separated beta values")->delimiter(',');
  c->add_option("--threads", search.threads)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--out", search.out, "Grid CSV")->required();
  c->add_option("--best-out", search.best_out, "Chosen alpha/beta JSON");
  add_manifest(c, search.run_manifest);
  c->callback([&] { action = [&] { cmd_search(search, args); return kExitOk; }; });

  PredictOptions predict;
  c = app.add_subcommand("predict", "Classify a PCE1 container of queries");
  add_data(c, predict.data);
  c->add_option("--checkpoint", predict.checkpoint);
  c->add_option("--queries", predict.queries, "PCE1 query container")
      ->required()->check(CLI::ExistingFile);
  c->add_option("--alpha", predict.alpha);
  c->add_option("--beta", predict.beta);
  c->add_option("--out", predict.out, "Predictions CSV")->required();
  add_manifest(c, predict.run_manifest);
  c->callback([&] { action = [&] { cmd_predict(predict, args); return kExitOk; }; });

  ExportOptions exp;
  c = app.add_subcommand("export", "Write class prototypes as CSV");
  add_data(c, exp.data);
  c->add_option("--checkpoint", exp.checkpoint);
  c->add_option("--shots", exp.shots)->check(CLI::PositiveNumber);
  c->add_option("--seed", exp.seed);
  c->add_option("--out", exp.out, "Prototype CSV")->required();
  add_manifest(c, exp.run_manifest);
  c->callback([&] { action = [&] { cmd_export(exp, args); return kExitOk; }; });

  ReportOptions report;
  c = app.add_subcommand("report", "Merge report JSONs into a Markdown table");
  c->add_option("reports", report.inputs, "Report JSON files")
      ->required()->check(CLI::ExistingFile);
  c->add_option("--out", report.out, "Markdown output")->required();
  add_manifest(c, report.run_manifest);
  c->callback([&] { action = [&] { cmd_report(report, args); return kExitOk; }; });

  SynthOptions synth;
  c = app.add_subcommand("synth", "Write a synthetic Gaussian-cluster dataset");
  c->add_option("--out", synth.out, "Dataset directory")->required();
  c->add_option("--name", synth.name);
  c->add_option("--seed", synth.seed)->required();
  c->add_option("--classes", synth.classes)->check(CLI::Range(2, 100000))->capture_default_str();
  c->add_option("--dim", synth.dim)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--shots", synth.shots)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--val-per-class", synth.val_per_class)->capture_default_str();
  c->add_option("--test-per-class", synth.test_per_class)->capture_default_str();
  c->add_option("--prompts-per-class", synth.prompts_per_class)
      ->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--sigma", synth.sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
  c->add_option("--min-center-distance", synth.min_center_distance)->capture_default_str();
  c->add_option("--text-alignment", synth.text_alignment)
      ->check(CLI::Range(-1.0, 1.0))->capture_default_str();
  c->add_flag("--text-noise", synth.text_noise, "Text prompts around random directions");
  add_manifest(c, synth.run_manifest);
  c->callback([&] { action = [&] { cmd_synth(synth, args); return kExitOk; }; });

  fs::path rerun_manifest;
  c = app.add_subcommand("rerun", "Repeat a recorded run and check its outputs");
  c->add_option("manifest", rerun_manifest, "Run manifest JSON")->required();
  c->callback([&] { action = [&] { return rerun(rerun_manifest); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "protofs: usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const NotReproduced& e) {
    std::fprintf(stderr, "protofs: not reproduced: %s\n", e.what());
    return kExitNotReproduced;
  } catch (const Error& e) {
    std::fprintf(stderr, "protofs: error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "protofs: internal error: %s\n", e.what());
    return kExitInternal;
  }
}

}  // namespace protofs::cli
