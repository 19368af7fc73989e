#include <iostream>
#include <string>
#include <vector>

#include "ksm_cli.hpp"

int main(int argc, char** argv) {
  std::cerr.setf(std::ios::unitbuf);
  std::vector<std::string> args(argv + 1, argv + argc);
  return ksm::cli::dispatch(args, std::cout, std::cerr);
}
