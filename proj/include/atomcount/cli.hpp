#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace atomcount::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kConfig = 2,
    kValidation = 3,
    kPartial = 4,
    kIo = 5,
};

/// Runs one subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace atomcount::cli
