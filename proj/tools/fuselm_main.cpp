#include <iostream>

#include "fuselm/cli.hpp"

int main(int argc, char** argv) { return fuselm::cli::run(argc, argv, std::cout, std::cerr); }
