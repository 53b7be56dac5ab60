#include "fimvar/harness.hpp"

int main(int argc, char** argv) { return fimvar::cli_main(argc, argv); }
