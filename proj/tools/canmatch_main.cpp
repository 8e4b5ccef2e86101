#include "canmatch/cli.hpp"

int main(int argc, char** argv) { return canmatch::cli::run(argc, argv); }
