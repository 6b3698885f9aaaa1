#include <iostream>

#include "blis/cli.hpp"

int main(int argc, char** argv) { return blis::cli::cli_dispatch(argc, argv, std::cout, std::cerr); }
