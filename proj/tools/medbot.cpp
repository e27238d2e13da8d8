#include <iostream>

#include "medbot/cli.hpp"

int main(int argc, char** argv) { return medbot::cli::run(argc, argv, std::cin, std::cout, std::cerr); }
