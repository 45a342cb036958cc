// Command-line entry point.

#include "dykaf/cli.hpp"

int main(int argc, char** argv) { return dykaf::run_cli(argc, argv); }
