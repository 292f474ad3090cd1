#include "smorm/cli.hpp"

int main(int argc, char** argv) { return smorm::cli::run(argc, argv); }
