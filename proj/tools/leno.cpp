#include "leno/pipeline.hpp"

int main(int argc, char** argv) { return leno::run_cli(argc, argv); }
