#pragma once

namespace mrt {

/// Entry point for the command-line tool. Returns the process exit code:
/// 0 success, 1 usage/config error, 2 data/numerical error.
int run_cli(int argc, char** argv);

} // namespace mrt
