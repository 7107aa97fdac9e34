#include "mulfa/cli.hpp"

int main(int argc, char** argv) { return mulfa::cli::run(argc, argv); }
