#include "mrt/cli.hpp"

int main(int argc, char** argv) { return mrt::run_cli(argc, argv); }
