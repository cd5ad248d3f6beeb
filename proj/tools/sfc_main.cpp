#include "sfc/cli.hpp"

int main(int argc, char** argv) { return sfc::dispatch(argc, argv); }
