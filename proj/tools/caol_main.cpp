#include "caol/cli.hpp"

int main(int argc, char** argv) { return caol::cli::main(argc, argv); }
