#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace amrevol {

/// Exit codes: 0 success, 1 operational failure, 2 usage error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Convenience for tests: argv[0] is supplied.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amrevol
