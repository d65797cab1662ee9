#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bayesrisk {

// Process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitInputMissing = 2,
    kExitDataset = 3,
    kExitFormat = 4,
    kExitScoring = 5,
    kExitPlanning = 6,
};

// Runs the command line (args excludes the program name). Never throws;
// errors are reported on `err` and mapped onto an exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Maps the current exception onto an exit code. Call from a catch block.
int exit_code_for_current_exception(std::ostream& err);

}  // namespace bayesrisk
