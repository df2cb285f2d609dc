#include <iostream>
#include <string>
#include <vector>

#include "twolevel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return twolevel::run_cli(args, std::cout, std::cerr);
}
