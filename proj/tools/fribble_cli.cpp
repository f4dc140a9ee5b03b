#include <iostream>

#include "fribble/cli.hpp"

int main(int argc, char** argv) { return fribble::cli::run(argc, argv, std::cout, std::cerr); }
