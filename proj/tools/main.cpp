#include "cli.hpp"

int main(int argc, char** argv) { return gridtherm::cli::run(argc, argv); }
