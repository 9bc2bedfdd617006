#include "promptsr/cli.hpp"

int main(int argc, char** argv) { return promptsr::cli::run_cli(argc, argv); }
