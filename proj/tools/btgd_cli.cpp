#include "experiment.hpp"

int main(int argc, char** argv) { return btgd::cli::main_entry(argc, argv); }
