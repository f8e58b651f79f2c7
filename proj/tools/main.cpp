#include "cli.hpp"

int main(int argc, char** argv) { return fpjpa::cli::run(argc, argv); }
