#include "convoice/cli.hpp"

int main(int argc, char** argv) { return convoice::CliMain(argc, argv); }
