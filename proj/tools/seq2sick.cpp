#include <iostream>

#include "seq2sick/cli.hpp"

int main(int argc, char** argv) { return seq2sick::cli::run(argc, argv, std::cout, std::cerr); }
