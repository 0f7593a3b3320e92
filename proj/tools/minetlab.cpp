#include "minetlab/cli.hpp"

int main(int argc, char** argv) { return minetlab::cli::main(argc, argv); }
