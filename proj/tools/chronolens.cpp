#include "chronolens/cli/app.hpp"

int main(int argc, char** argv) { return chronolens::cli::run_command(argc, argv); }
