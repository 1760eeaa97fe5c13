#include "hydroseq/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hydroseq::cli::main(argc, argv, std::cout, std::cerr); }
