#include <iostream>
#include <string>
#include <vector>

#include "spdyn/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return spdyn::cli::run(args, std::cout, std::cerr);
}
