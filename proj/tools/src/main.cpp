#include "lsub_cli/app.hpp"

#include <iostream>

int main(int argc, char** argv) { return lsub::cli::run(argc, argv, std::cout, std::cerr); }
