#include "cortiplan/cli.hpp"

int main(int argc, char** argv) { return cortiplan::run_cli(argc, argv); }
