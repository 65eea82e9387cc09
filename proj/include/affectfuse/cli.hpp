// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace affectfuse::cli {

// One full invocation, in-process. args exclude the program name. Returns
// the process exit code: 0 success, 1 usage or config error, 2 data or
// format error, 3 numerical or training error. Usage errors never leave
// partial output files behind; all writing happens after the work is done.
int run(std::vector<std::string> args);

}  // namespace affectfuse::cli
