#include <iostream>

#include "sonata/cli.hpp"

int main(int argc, char** argv) { return sonata::cli_main(argc, argv, std::cout, std::cerr); }
