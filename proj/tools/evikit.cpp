#include <iostream>
#include <string>
#include <vector>

#include "evikit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return evikit::cli::run(args, std::cout, std::cerr);
}
