#include <string>
#include <vector>

#include "protoot/cli.hpp"

int main(int argc, char** argv) {
    return protoot::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
