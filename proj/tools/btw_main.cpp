#include "btw/cli.hpp"

int main(int argc, char** argv) { return btw::run_cli(argc, argv); }
