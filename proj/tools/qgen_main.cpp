#include "qgen/cli.hpp"

int main(int argc, char **argv) {
    return qgen::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
