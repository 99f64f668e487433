#include <iostream>

#include "deepgap/cli.hpp"

int main(int argc, char** argv) {
  return deepgap::cli::run(argc, argv, std::cout, std::cerr);
}
