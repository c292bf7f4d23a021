#include <iostream>

#include "krone/cli.hpp"

int main(int argc, char** argv) { return krone::cli::run(argc, argv, std::cout, std::cerr); }
