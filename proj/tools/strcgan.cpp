#include <iostream>

#include "strc/cli/cli.hpp"

int main(int argc, char** argv) {
  return strc::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
