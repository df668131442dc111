#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace flotapinn::cli {

// Command-line driver: simulate, preprocess, train, benchmark, evaluate,
// report.  args excludes the program name.  Returns the process exit code:
// 0 success, 1 domain error, 2 usage error (bad flags or subcommand).
// Diagnostics go to err, the one-line result summary to out.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

// main() adapter: skips argv[0] and wires std::cout/std::cerr.
int run_cli(int argc, const char* const* argv);

} // namespace flotapinn::cli
