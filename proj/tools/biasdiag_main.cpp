#include "biasdiag/cli.hpp"

int main(int argc, char** argv) { return biasdiag::run_cli(argc, argv); }
