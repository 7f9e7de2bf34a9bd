#include <iostream>

#include "scpc/commands.hpp"

int main(int argc, char** argv) { return scpc::run_cli(argc, argv, std::cout, std::cerr); }
