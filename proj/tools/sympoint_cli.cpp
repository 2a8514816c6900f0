#include "sympoint/cli.hpp"

int main(int argc, char** argv) { return sympoint::dispatch(argc, argv); }
