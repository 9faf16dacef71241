#pragma once

#include <string>
#include <vector>

namespace cfbound {

inline constexpr const char* kToolVersion = "0.1.0";

// exit status of the command line front end
enum ExitCode : int {
    kExitOk = 0,
    kExitParse = 2,
    kExitInfeasible = 3,
    kExitNumeric = 4,
};

/// Parses and runs one command. Errors are reported on stderr and mapped to
/// the exit codes above.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace cfbound
