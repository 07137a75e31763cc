#include "trico/cli.hpp"

int main(int argc, char** argv) { return trico::run_command(argc, argv); }
