#include <iostream>

#include "aegis/cli.hpp"

int main(int argc, char** argv) { return aegis::run_cli(argc, argv, std::cin, std::cout, std::cerr); }
