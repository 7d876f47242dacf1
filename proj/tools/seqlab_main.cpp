#include "seqlab/cli.hpp"

int main(int argc, char** argv) { return seqlab::cli_main(argc, argv); }
