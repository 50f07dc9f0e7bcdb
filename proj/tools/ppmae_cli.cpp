#include <iostream>

#include "ppmae/cli/cli.hpp"

int main(int argc, char** argv) { return ppmae::cli::run(argc, argv, std::cout, std::cerr); }
