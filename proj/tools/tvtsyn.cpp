#include "tvtsyn/cli.hpp"

int main(int argc, char** argv) { return tvtsyn::cli::run(argc, argv); }
