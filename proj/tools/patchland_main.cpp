#include <string>
#include <vector>

#include "patchland/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return patchland::cli::run_cli(args);
}
