#pragma once

namespace safenav::cli {

// Parses argv and runs one subcommand (simulate, evaluate, enumerate, plot).
// Returns the process exit code: 0 success, 1 runtime failure, 2 usage or
// configuration error.
int run(int argc, const char* const* argv);

}  // namespace safenav::cli
