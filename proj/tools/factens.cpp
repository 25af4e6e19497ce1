#include <iostream>

#include "factens/cli/commands.hpp"

int main(int argc, char** argv) { return factens::cli::run_cli(argc, argv, std::cout, std::cerr); }
