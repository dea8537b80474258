#include <vector>
#include <string>

#include "spcnav/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return spcnav::cli::dispatch(args);
}
