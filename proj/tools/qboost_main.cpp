#include "qboost/cli.hpp"

int main(int argc, char** argv) { return qboost::run_cli(argc, argv); }
