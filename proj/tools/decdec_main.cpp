#include "decdec/cli.hpp"

int main(int argc, char** argv) { return decdec::run(argc, argv); }
