#include "aop/cli.hpp"

int main(int argc, char** argv) { return aop::run_cli(argc, argv); }
