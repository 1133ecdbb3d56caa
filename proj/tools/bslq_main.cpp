#include "bslq/cli.hpp"

int main(int argc, char** argv) { return bslq::cli_main(argc, argv); }
