#include "reidlab/cli.hpp"

int main(int argc, char** argv) { return reidlab::cli_dispatch(argc, argv); }
