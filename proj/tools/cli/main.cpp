#include <iostream>

#include "mcpeval/cli.hpp"

int main(int argc, char** argv) { return mcpeval::cli::run_cli(argc, argv, std::cout, std::cerr); }
