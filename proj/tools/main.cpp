#include <iostream>

#include "taskprompt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return taskprompt::run_cli(args, std::cout, std::cerr, std::cin);
}
