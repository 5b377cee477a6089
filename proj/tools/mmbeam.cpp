#include "mmbeam/app/commands.hpp"

int main(int argc, char** argv) { return mmbeam::app::run_cli(argc, argv); }
