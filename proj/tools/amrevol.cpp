#include "amrevol/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return amrevol::run_cli(argc, argv, std::cout, std::cerr);
}
