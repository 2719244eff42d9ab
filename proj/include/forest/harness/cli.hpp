#pragma once

#include <ostream>

namespace forest::harness {

/// The forestbench command line. Prints a JSON summary to `out` on success and returns 0;
/// errors go to `err` with status 1; usage problems print usage and return 2.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace forest::harness
