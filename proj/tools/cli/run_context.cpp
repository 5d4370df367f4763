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
#include "cli/run_context.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "protofs/digest.hpp"
#include "protofs/embedding_store.hpp"

namespace protofs::cli {

int exit_code(ErrorCode code) { return 10 + static_cast<int>(code); }

OutputSet::~OutputSet() {
  if (committed_) return;
  for (const Entry& e : entries_) {
    std::error_code ec;
    fs::remove_all(e.staged, ec);
  }
}

fs::path OutputSet::stage(const fs::path& final_path, bool is_dir) {
  if (final_path.empty()) throw UsageError("empty output path");
  for (const Entry& e : entries_) {
    if (e.final_path == final_path) throw UsageError("output given twice: " + final_path.string());
  }
  fs::path parent = final_path.parent_path();
  if (parent.empty()) parent = ".";
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + parent.string());
  const fs::path staged =
      parent / ("." + final_path.filename().string() + ".partial-" + std::to_string(::getpid()));
  fs::remove_all(staged, ec);
  if (is_dir) {
    fs::create_directories(staged, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + staged.string());
  }
  entries_.push_back({final_path, staged, is_dir});
  return staged;
}

fs::path OutputSet::add_file(const fs::path& final_path) { return stage(final_path, false); }
fs::path OutputSet::add_dir(const fs::path& final_path) { return stage(final_path, true); }

json OutputSet::describe() const {
  json out = json::array();
  for (const Entry& e : entries_) {
    if (!e.is_dir) {
      out.push_back({{"path", e.final_path.string()}, {"sha256", sha256_file(e.staged)}});
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& f : fs::recursive_directory_iterator(e.staged)) {
      if (f.is_regular_file()) files.push_back(fs::relative(f.path(), e.staged));
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& rel : files) {
      out.push_back({{"path", (e.final_path / rel).string()},
                     {"sha256", sha256_file(e.staged / rel)}});
    }
  }
  return out;
}

void OutputSet::commit() {
  for (const Entry& e : entries_) {
    std::error_code ec;
    fs::remove_all(e.final_path, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot replace " + e.final_path.string());
    fs::rename(e.staged, e.final_path, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot move output into " + e.final_path.string());
  }
  committed_ = true;
}

RunRecord::RunRecord(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)) {}

void RunRecord::input_file(const fs::path& path) {
  inputs_.push_back({{"path", fs::absolute(path).lexically_normal().string()},
                     {"sha256", sha256_file(path)}});
}

void RunRecord::input_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& f : fs::recursive_directory_iterator(dir)) {
    if (f.is_regular_file()) files.push_back(f.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) input_file(f);
}

void RunRecord::input_dataset(const fs::path& manifest_path) {
  input_file(manifest_path);
  const DatasetManifest m = DatasetManifest::parse(read_text(manifest_path));
  const fs::path root = manifest_path.parent_path();
  for (const ManifestSplit* s : {&m.support, &m.text, &m.val, &m.test}) {
    input_file(root / s->file);
  }
}

void RunRecord::finish(OutputSet& outputs, const fs::path& path) const {
  const json produced = outputs.describe();
  const char* data_dir = std::getenv("PROTO_DATA_DIR");
  json manifest = {
      {"tool", "protofs"},
      {"version", kToolVersion},
      {"command", command_},
      {"argv", argv_},
      {"cwd", fs::current_path().string()},
      {"env", {{"PROTO_DATA_DIR", data_dir ? json(data_dir) : json(nullptr)}}},
      {"config", config_},
      {"seeds", seeds_},
      {"inputs", inputs_},
      {"outputs", produced},
      {"timestamp", utc_timestamp()},
  };
  write_verified(outputs.add_file(path), manifest.dump(2) + "\n");
  outputs.commit();
}

fs::path default_manifest_path(const fs::path& primary_output) {
  fs::path p = primary_output;
  if (p.has_filename() && p.filename() != "." && p.filename() != "..") {
    return p.replace_extension(".run.json");
  }
  return p.lexically_normal().parent_path().string() + ".run.json";
}

fs::path resolve_dataset(const std::string& arg) {
  fs::path p = arg;
  const char* root = std::getenv("PROTO_DATA_DIR");
  if (arg.empty()) {
    if (!root || !*root) throw UsageError("no --data given and PROTO_DATA_DIR is unset");
    p = root;
  } else if (p.is_relative() && !fs::exists(p) && root && *root) {
    p = fs::path(root) / p;
  }
  if (fs::is_directory(p)) p /= "dataset.json";
  if (!fs::exists(p)) throw Error(ErrorCode::kMissingFile, p.string());
  return p;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_verified(const fs::path& path, const std::string& bytes) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
  if (read_text(path) != bytes) throw Error(ErrorCode::kIo, "read-back mismatch: " + path.string());
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace protofs::cli
