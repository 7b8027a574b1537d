#include <iostream>

#include "pane/cli.hpp"

int main(int argc, char** argv) { return pane::run_cli(argc, argv, std::cout, std::cerr); }
