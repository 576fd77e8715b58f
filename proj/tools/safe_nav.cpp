#include "safenav/cli.hpp"

int main(int argc, char** argv) { return safenav::cli::run(argc, argv); }
