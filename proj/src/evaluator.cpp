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

#include "protofs/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "protofs/error.hpp"

namespace protofs {
namespace {

using nlohmann::json;

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

}  // namespace

EvalReport evaluate(const PrototypeModel& model, const QuerySet& queries,
                    const MixtureHyperparams& hp,
                    std::span<const std::string> class_names,
                    ReportConfig config) {
  if (!queries.labeled()) {
    throw Error(ErrorCode::kNoLabels, "evaluation needs labeled queries");
  }
  const std::size_t n = model.num_classes();
  const auto& truth = *queries.labels;
  const Classification c =
      classify_queries(model, queries.embeddings.to_tensor(), hp);

  EvalReport report;
  report.num_queries = truth.size();
  report.confusion.assign(n, std::vector<std::size_t>(n, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n) {
      throw Error(ErrorCode::kLabelOutOfRange, "query label " + std::to_string(truth[i]));
    }
    ++report.confusion[truth[i]][c.labels[i]];
    correct += truth[i] == c.labels[i];
  }
  report.overall_accuracy =
      truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t total = 0;
    for (std::size_t v : report.confusion[k]) total += v;
    report.per_class_accuracy.push_back(
        total == 0 ? std::nullopt
                   : std::optional<double>(static_cast<double>(report.confusion[k][k]) /
                                           static_cast<double>(total)));
  }
  report.class_names.assign(class_names.begin(), class_names.end());
  config.alpha = hp.alpha;
  config.beta = hp.beta;
  report.config = std::move(config);
  return report;
}

std::string EvalReport::to_json_string() const {
  json per_class = json::array();
  for (const auto& a : per_class_accuracy) per_class.push_back(a ? json(*a) : json(nullptr));
  json j;
  j["overall_accuracy"] = overall_accuracy;
  j["num_queries"] = num_queries;
  j["per_class_accuracy"] = per_class;
  j["confusion"] = confusion;
  j["class_names"] = class_names;
  j["config"] = {{"dataset", config.dataset}, {"split", config.split},
                 {"variant", config.variant}, {"adapter", config.adapter},
                 {"losses", config.losses},   {"train_text", config.train_text},
                 {"alpha", config.alpha},     {"beta", config.beta},
                 {"shots", config.shots},     {"seed", config.seed}};
  return j.dump(2) + "\n";
}

EvalReport EvalReport::parse_json(std::string_view text) {
  EvalReport r;
  try {
    const json j = json::parse(text);
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    r.num_queries = j.at("num_queries").get<std::size_t>();
    for (const json& a : j.at("per_class_accuracy")) {
      r.per_class_accuracy.push_back(a.is_null() ? std::nullopt
                                                 : std::optional<double>(a.get<double>()));
    }
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    r.class_names = j.value("class_names", std::vector<std::string>{});
    const json& c = j.at("config");
    r.config.dataset = c.at("dataset").get<std::string>();
    r.config.split = c.value("split", "test");
    r.config.variant = c.at("variant").get<std::string>();
    r.config.adapter = c.value("adapter", "identity");
    r.config.losses = c.value("losses", "");
    r.config.train_text = c.value("train_text", false);
    r.config.alpha = c.at("alpha").get<double>();
    r.config.beta = c.at("beta").get<double>();
    r.config.shots = c.at("shots").get<std::size_t>();
    r.config.seed = c.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadManifest, std::string("eval report: ") + e.what());
  }
  return r;
}

std::string EvalReport::markdown_row() const {
  return "| " + config.variant + " | " + std::to_string(config.shots) + " | " +
         percent(overall_accuracy) + " |";
}

std::string report_table(std::span<const EvalReport> reports) {
  std::vector<std::string> datasets;
  std::vector<std::string> variants;
  for (const EvalReport& r : reports) {
    if (std::find(datasets.begin(), datasets.end(), r.config.dataset) == datasets.end()) {
      datasets.push_back(r.config.dataset);
    }
    if (std::find(variants.begin(), variants.end(), r.config.variant) == variants.end()) {
      variants.push_back(r.config.variant);
    }
  }
  auto variant_rank = [&](const std::string& v) {
    return std::find(variants.begin(), variants.end(), v) - variants.begin();
  };
  // (shots, variant rank) -> dataset -> accuracy; later reports win.
  std::map<std::pair<std::size_t, std::ptrdiff_t>, std::map<std::string, double>> rows;
  for (const EvalReport& r : reports) {
    rows[{r.config.shots, variant_rank(r.config.variant)}][r.config.dataset] =
        r.overall_accuracy;
  }

  std::string out = "| Variant | Shots |";
  std::string rule = "|---|---:|";
  for (const auto& d : datasets) {
    out += " " + d + " |";
    rule += "---:|";
  }
  out += "\n" + rule + "\n";
  for (const auto& [key, cells] : rows) {
    out += "| " + variants[static_cast<std::size_t>(key.second)] + " | " +
           std::to_string(key.first) + " |";
    for (const auto& d : datasets) {
      const auto it = cells.find(d);
      out += " " + (it == cells.end() ? std::string("-") : percent(it->second)) + " |";
    }
    out += "\n";
  }
  return out;
}

}  // namespace protofs
