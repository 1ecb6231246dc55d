#include "moka/cli.hpp"

int main(int argc, char** argv) { return moka::cli::run_cli(argc, argv); }
