#include <vector>

#include "shiftbounds/cli.hpp"

int main(int argc, char** argv) {
  return shiftbounds::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
