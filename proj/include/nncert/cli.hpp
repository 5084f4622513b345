#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nncert::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kSolverFailure = 2,
  kOracleDiscrepancy = 3,
};

/// args excludes the program name. Output goes to out/err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace nncert::cli
