#include <string>
#include <vector>

#include "vbody/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vbody::cli_run(args);
}
