#include <iostream>

#include "bodyrig/cli/cli.hpp"

int main(int argc, char** argv) {
  return bodyrig::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
