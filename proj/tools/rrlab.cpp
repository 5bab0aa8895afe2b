#include <iostream>
#include <string>
#include <vector>

#include "rrlab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return rrlab::cli_main(args, std::cout, std::cerr);
}
