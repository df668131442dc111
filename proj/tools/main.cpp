#include "flotapinn/cli.hpp"

int main(int argc, char** argv) { return flotapinn::cli::run_cli(argc, argv); }
