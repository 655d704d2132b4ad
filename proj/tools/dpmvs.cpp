#include "dpmvs/cli.hpp"

int main(int argc, char** argv) { return dpmvs::run_cli(argc, argv); }
