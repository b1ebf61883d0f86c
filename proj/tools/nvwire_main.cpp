#include "nvwire/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return nvwire::run_cli(argc, argv, std::cout, std::cerr); }
