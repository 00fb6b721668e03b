#include <iostream>
#include <string>
#include <vector>

#include "jemlab/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return jemlab::run_cli(args, std::cout, std::cerr);
}
