#include "simtrack/cli.hpp"

int main(int argc, char** argv) { return simtrack::cli::run(argc, argv); }
