#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return peee::cli::run(argc, argv, std::cout, std::cerr);
}
