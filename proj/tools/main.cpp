#include "lkmrl/cli.hpp"

int main(int argc, char** argv) { return lkmrl::cli_main(argc, argv); }
