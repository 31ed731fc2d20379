#include "cweibull/cli.hpp"

int main(int argc, char** argv) { return cweibull::cli::run(argc, argv); }
