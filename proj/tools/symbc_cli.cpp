#include <iostream>
#include <string>
#include <vector>

#include "symbc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return symbc::cli::main_with_args(args, std::cout, std::cerr);
}
