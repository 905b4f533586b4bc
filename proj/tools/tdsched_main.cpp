#include "tdsched/harness.hpp"

int main(int argc, char** argv) { return tdsched::cli_main(argc, argv); }
