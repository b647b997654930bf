#include "chanalloc/harness.hpp"

int main(int argc, char** argv) { return chanalloc::cli_main(argc, argv); }
