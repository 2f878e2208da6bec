#include "saf/cli.hpp"

int main(int argc, char** argv) { return saf::cli::dispatch(argc, argv); }
