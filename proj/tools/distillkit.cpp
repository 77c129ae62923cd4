#include "distillkit/cli.hpp"

int main(int argc, char** argv) { return dk::run_cli(argc, argv); }
