#include "edpci/cli.hpp"

int main(int argc, char** argv) { return edpci::cli::run(argc, argv); }
