#include "cli.hpp"

int main(int argc, char** argv) { return photocon::cli::run(argc, argv); }
