#include <iostream>

#include "puca/cli.hpp"

int main(int argc, char** argv) { return puca::cli::run(argc, argv, std::cout, std::cerr); }
