#include "rvesel/cli.hpp"

int main(int argc, char** argv) { return rvesel::cli_main(argc, argv); }
