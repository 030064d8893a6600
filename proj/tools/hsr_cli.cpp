#include "cli_app.hpp"

int main(int argc, char** argv) { return hsr::cli::dispatch(argc, argv); }
