#pragma once

namespace photocon::cli {

/// Parses and runs one subcommand. Returns the process exit code
/// (0 ok, 2 usage, 3 data, 4 numeric, 1 anything unexpected).
int run(int argc, const char* const* argv);

}  // namespace photocon::cli
