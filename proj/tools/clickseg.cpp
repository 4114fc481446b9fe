#include <clickseg/cli.hpp>

int main(int argc, char** argv) { return clickseg::cli::run(argc, argv); }
