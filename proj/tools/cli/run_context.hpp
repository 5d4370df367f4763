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
#ifndef PROTOFS_TOOLS_CLI_RUN_CONTEXT_HPP_
#define PROTOFS_TOOLS_CLI_RUN_CONTEXT_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protofs/error.hpp"

namespace protofs::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNotReproduced = 3;

/// 10 + the code's position in ErrorCode, so every library error has its own
/// stable status.
int exit_code(ErrorCode code);

/// Bad flag combinations detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Outputs are written under hidden sibling paths and moved into place by
/// commit(). Whatever was not committed is deleted on destruction, so a
/// failed command leaves neither partial files nor a clobbered previous
/// result.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet();

  // Returns the staging path to write to.
  fs::path add_file(const fs::path& final_path);
  fs::path add_dir(const fs::path& final_path);

  /// [{path, sha256}] over every staged file, reported under final paths.
  json describe() const;

  void commit();

 private:
  struct Entry {
    fs::path final_path;
    fs::path staged;
    bool is_dir;
  };
  fs::path stage(const fs::path& final_path, bool is_dir);

  std::vector<Entry> entries_;
  bool committed_ = false;
};

/// Accumulates the run manifest of one command invocation.
class RunRecord {
 public:
  RunRecord(std::string command, std::vector<std::string> argv);

  json& config() { return config_; }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

  void input_file(const fs::path& path);
  void input_dir(const fs::path& dir);
  // The manifest plus every container it references.
  void input_dataset(const fs::path& manifest_path);

  /// Stages the manifest at `path` and commits all outputs.
  void finish(OutputSet& outputs, const fs::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json config_ = json::object();
  json seeds_ = json::object();
  json inputs_ = json::array();
};

/// Default run-manifest location next to a command's primary output.
fs::path default_manifest_path(const fs::path& primary_output);

/// Maps a --data argument to a dataset.json. Relative names that do not exist
/// under the working directory are looked up under $PROTO_DATA_DIR; an empty
/// argument means $PROTO_DATA_DIR itself.
fs::path resolve_dataset(const std::string& arg);

std::string read_text(const fs::path& path);

/// Writes `bytes` and reads them back; throws Io unless they match.
void write_verified(const fs::path& path, const std::string& bytes);

std::string utc_timestamp();

}  // namespace protofs::cli

#endif  // PROTOFS_TOOLS_CLI_RUN_CONTEXT_HPP_
