#include <iostream>
#include <string>
#include <vector>

#include "fgrad/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return fgrad::cli::run(args, std::cout, std::cerr);
}
