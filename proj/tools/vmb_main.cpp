#include <vector>

#include "vmb/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vmb::run_cli(args);
}
