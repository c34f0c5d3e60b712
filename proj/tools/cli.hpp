#pragma once

#include <ostream>

namespace csr::cli {

// Runs one subcommand; returns the process exit code (0 success,
// 1 usage error, 2 runtime failure).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csr::cli
