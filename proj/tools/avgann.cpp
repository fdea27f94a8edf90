#include "cli.hpp"

int main(int argc, char** argv) { return avgann::cli::cli_main(argc, argv); }
