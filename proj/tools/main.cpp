#include "nmtlab/cli.hpp"

int main(int argc, char** argv) { return nmtlab::cli_main(argc, argv); }
