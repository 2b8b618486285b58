#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace robustkit::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kRuntimeError = 2,
  kVerifyFailed = 3,
};

// `args` excludes the program name. Diagnostics go to `err` as a single line:
//   robustkit: error=<kind> field=<key> message="<text>"
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_compare(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace robustkit::cli
