#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace taskprompt {

/// Runs one command line. Returns the process exit code: 0 success,
/// 1 operational error, 2 usage error. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);

}  // namespace taskprompt
