#include "mmdci/cli.hpp"

int main(int argc, char** argv) { return mmdci::run_cli(argc, argv); }
