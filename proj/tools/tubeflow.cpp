#include "tubeflow/app/cli.hpp"

int main(int argc, char** argv) { return tubeflow::app::run_cli(argc, argv); }
