#include "ordseq/cli.hpp"

int main(int argc, char** argv) { return ordseq::run_cli(argc, argv); }
