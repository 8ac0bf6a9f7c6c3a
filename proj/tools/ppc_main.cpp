#include "ppc/cli.hpp"

int main(int argc, char** argv) { return ppc::cli::dispatch(argc, argv); }
