#include "cfbound/cli.hpp"

int main(int argc, char** argv) { return cfbound::run_cli(argc, argv); }
