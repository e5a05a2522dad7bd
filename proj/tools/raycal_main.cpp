#include <vector>
#include <string>

#include "raycal/cli.hpp"

int main(int argc, char** argv) {
  return raycal::run(std::vector<std::string>(argv + 1, argv + argc));
}
