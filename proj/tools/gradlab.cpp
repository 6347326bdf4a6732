#include "gradlab/cli.hpp"

int main(int argc, char** argv) { return gradlab::cli::run(argc, argv); }
