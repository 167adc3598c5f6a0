#include "commands.hpp"

int main(int argc, char** argv) { return ionaddr::cli::run(argc, argv); }
