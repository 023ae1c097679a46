#include <speccorr/cli.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    return speccorr::cli::run(argc, argv, std::cout, std::cerr);
}
