#include "cgqn/cli.hpp"

int main(int argc, char** argv) { return cgqn::cli::run(argc, argv); }
