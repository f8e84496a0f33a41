#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace irtbias::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNotConverged = 3,
};

// args excludes the program name, e.g. {"run", "--responses", "r.csv"}.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace irtbias::cli
