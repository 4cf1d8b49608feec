#include <iostream>

#include "nvdnp/cli.hpp"

int main(int argc, char** argv) { return nvdnp::cli::run(argc, argv, std::cout, std::cerr); }
