#include "chunkvc/cli.hpp"

int main(int argc, char** argv) { return chunkvc::run_cli(argc, argv); }
