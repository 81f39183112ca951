#include "pefcoh/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return pefcoh::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
