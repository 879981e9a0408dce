#include <iostream>
#include <string>
#include <vector>

#include "specrisk/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return specrisk::run_cli(args, std::cout, std::cerr);
}
