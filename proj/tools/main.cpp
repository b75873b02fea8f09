#include <iostream>
#include <string>
#include <vector>

#include "nkgad/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return nkgad::run_cli(args, std::cout, std::cerr);
}
