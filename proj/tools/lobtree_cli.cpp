#include "lobtree/harness.hpp"

int main(int argc, char** argv) { return lobtree::cli_main(argc, argv); }
