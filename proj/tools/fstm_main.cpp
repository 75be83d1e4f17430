#include <string>
#include <vector>

#include "fstm/cli.hpp"

int main(int argc, char** argv) {
  return fstm::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
