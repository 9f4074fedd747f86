// Copyright 2026 The partguide Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>

namespace partguide {

/// Exit codes of the `partguide` command.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,  // I/O, protocol or backend failure
  kExitUsage = 2,    // bad flags, unknown subcommand or variant
  kExitInput = 3,    // missing or malformed input files
};

/// Parses argv and runs one subcommand. Normal output goes to `out`,
/// diagnostics to `err`.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace partguide
