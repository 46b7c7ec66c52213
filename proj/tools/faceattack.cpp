#include <iostream>

#include "faceattack/cli.hpp"

int main(int argc, char** argv) { return faceattack::cli::run(argc, argv, std::cout, std::cerr); }
