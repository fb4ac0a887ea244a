#include "cli.hpp"

int main(int argc, char** argv) { return mixstage::cli::dispatch(argc, argv); }
