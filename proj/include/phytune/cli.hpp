#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "phytune/errors.hpp"

namespace phytune {

// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitUsage = 2,       // bad arguments or preconditions
    kExitConfig = 3,      // invalid or unknown configuration
    kExitIo = 4,          // missing input, unwritable output
    kExitClient = 5,      // LLM / verifier / classifier backend failure
    kExitData = 6,        // unparseable or invalid model output or records
    kExitEmptyInput = 7,  // nothing to process
    kExitDivergence = 8,  // training produced a non-finite loss
};

int exit_code_for(ErrorKind kind) noexcept;

// Entry point shared by the executable and the tests. `args` excludes the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace phytune
