#include <iostream>

#include "mvsde/cli/commands.hpp"

int main(int argc, char** argv) { return mvsde::cli::run_cli(argc, argv, std::cout, std::cerr); }
