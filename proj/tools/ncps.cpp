#include <iostream>

#include "ncps/cli.hpp"

int main(int argc, char** argv) { return ncps::run_cli(argc, argv, std::cout, std::cerr); }
