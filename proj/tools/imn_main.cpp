#include <iostream>
#include <string>
#include <vector>

#include "imn/service/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return imn::run_cli(args, std::cout, std::cerr);
}
