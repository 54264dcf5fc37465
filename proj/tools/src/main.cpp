#include <iostream>

#include "dino_cli/cli.hpp"

int main(int argc, char** argv) { return dino::cli::run(argc, argv, std::cout, std::cerr); }
