#include "nncert/cli.hpp"

int main(int argc, char** argv) { return nncert::cli::run(argc, argv); }
