#include "udap/cli.hpp"

int main(int argc, char** argv) { return udap::run_cli(argc, argv); }
