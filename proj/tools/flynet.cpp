#include <string>
#include <vector>

#include "flynet/cli.hpp"

int main(int argc, char** argv) {
  return flynet::cli::run(std::vector<std::string>(argv, argv + argc));
}
