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
#ifndef PROTOFS_TOOLS_CLI_APP_HPP_
#define PROTOFS_TOOLS_CLI_APP_HPP_

#include <string>
#include <vector>

namespace protofs::cli {

/// Parses `args` (program name excluded), runs the command and returns the
/// process exit status. Errors are reported on stderr.
int run(const std::vector<std::string>& args);

}  // namespace protofs::cli

#endif  // PROTOFS_TOOLS_CLI_APP_HPP_
