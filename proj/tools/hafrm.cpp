#include <iostream>
#include <string>
#include <vector>

#include "hafrm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hafrm::run_cli(args, std::cout, std::cerr);
}
