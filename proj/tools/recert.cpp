#include "recert/cli.hpp"

int main(int argc, char** argv) { return recert::run(argc, argv); }
