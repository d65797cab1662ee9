#include <iostream>

#include "bayesrisk/cli.hpp"

int main(int argc, char** argv) {
    return bayesrisk::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
