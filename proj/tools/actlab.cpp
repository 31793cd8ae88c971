#include <exception>
#include <iostream>

#include "actlab/cli.hpp"

int main(int argc, char** argv) {
  try {
    return actlab::cli::run_cli(argc, argv, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return actlab::cli::kClaimFailure;
  }
}
