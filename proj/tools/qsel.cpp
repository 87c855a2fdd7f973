#include "qsel/cli.hpp"

int main(int argc, char** argv) { return qsel::run_cli(argc, argv); }
