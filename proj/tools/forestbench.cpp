#include <iostream>

#include "forest/harness/cli.hpp"
#include "forest/harness/runner.hpp"

int main(int argc, char** argv) {
  forest::harness::set_progress_sink([](const std::string& line) { std::cerr << line << "\n"; });
  return forest::harness::run_cli(argc, argv, std::cout, std::cerr);
}
