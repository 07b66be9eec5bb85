#include <iostream>
#include <string>
#include <vector>

#include "mksr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return mksr::run_cli(args, std::cout, std::cerr);
}
