#include <skipreward/cli.hpp>

int main(int argc, char** argv) { return skipreward::dispatch(argc, argv); }
