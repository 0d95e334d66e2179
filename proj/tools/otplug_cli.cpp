#include <iostream>

#include "otplug/harness/cli.hpp"

int main(int argc, char** argv) { return otplug::run_cli(argc, argv, std::cout, std::cerr); }
