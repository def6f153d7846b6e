#include <iostream>

#include "extctl/cli.hpp"

int main(int argc, char** argv) { return extctl::run_cli(argc, argv, std::cout, std::cerr); }
