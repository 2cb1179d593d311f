#include "migrasim/cli.hpp"

int main(int argc, char** argv) {
    return migrasim::run_cli(argc, argv);
}
