#pragma once

#include <string>
#include <vector>

namespace mixstage::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kRuntimeError = 3,
};

/// Parses argv (argv[0] is the program name) and runs one subcommand.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace mixstage::cli
