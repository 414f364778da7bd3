/* Copyright 2026 The rescale-lab Authors. All Rights Reserved.

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
// Command-line front end. Every subcommand is deterministic for fixed flags,
// seed and input files.

#ifndef RESCALE_LAB_CLI_H_
#define RESCALE_LAB_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace rescale {

inline constexpr const char* kCsvHeader = "# rescale-lab v1";

// `args` excludes the program name. Returns the process exit code: 0 on
// success, 1 on a failed parity check, 2 usage, 3 format, 4 numeric.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rescale

#endif  // RESCALE_LAB_CLI_H_
