#include <iostream>

#include "mcmp/cli.hpp"

int main(int argc, char** argv) { return mcmp::run_cli(argc, argv, std::cout, std::cerr); }
