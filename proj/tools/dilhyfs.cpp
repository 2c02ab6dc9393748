#include "dilhyfs/cli.hpp"

int main(int argc, char** argv) { return dilhyfs::cli::main(argc, argv); }
