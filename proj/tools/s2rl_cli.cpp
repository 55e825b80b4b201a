#include <iostream>
#include <string>
#include <vector>

#include "s2rl/expcli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return s2rl::expcli::cli_run(args, std::cout, std::cerr);
}
