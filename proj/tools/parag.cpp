#include "parag/cli.hpp"

int main(int argc, char** argv) { return parag::run(argc, argv); }
