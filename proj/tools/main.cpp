#include "cli.hpp"

int main(int argc, char** argv) { return ralm::cli::run(argc, argv); }
