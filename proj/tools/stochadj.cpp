#include <iostream>

#include "stochadj/cli.hpp"

int main(int argc, char** argv) { return stochadj::cli::run(argc, argv, std::cout, std::cerr); }
