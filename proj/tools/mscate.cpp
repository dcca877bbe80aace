#include "cli/commands.hpp"

int main(int argc, char** argv) { return mscate::cli::run(argc, argv); }
