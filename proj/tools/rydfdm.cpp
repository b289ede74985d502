// Command line entry point.  Subcommands are registered in
// rydfdm/cli.hpp; this file only owns main().

#include <iostream>
#include <vector>

#include "rydfdm/cli.hpp"

int main(int argc, char** argv) {
    return rydfdm::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc),
                                std::cout, std::cerr);
}
