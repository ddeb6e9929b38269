#include "mscan/cli.hpp"

int main(int argc, char** argv) { return mscan::run_cli(argc, argv); }
