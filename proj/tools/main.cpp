#include <iostream>

#include "sketchmotion/cli.hpp"

int main(int argc, char** argv) { return sketchmotion::cli::run(argc, argv, std::cout, std::cerr); }
