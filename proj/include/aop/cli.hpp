#pragma once

namespace aop {

/// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime failure.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRuntime = 3 };

/// Entry point of the `aop` tool.
int run_cli(int argc, char** argv);

} // namespace aop
