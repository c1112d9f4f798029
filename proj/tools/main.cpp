#include "cli_app.hpp"

int main(int argc, char **argv) { return schrodctl::cli::run(argc, argv); }
