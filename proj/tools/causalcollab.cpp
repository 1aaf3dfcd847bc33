#include <iostream>
#include <string>
#include <vector>

#include "causalcollab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return causalcollab::run_cli(args, std::cout);
}
