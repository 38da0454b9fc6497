#include "flowlab/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return flowlab::cli::run(argc, argv, std::cout, std::cerr); }
