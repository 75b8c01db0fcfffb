#include <iostream>

#include "senti/cli.hpp"

int main(int argc, char** argv) { return senti::cli::run(argc, argv, std::cout, std::cerr); }
