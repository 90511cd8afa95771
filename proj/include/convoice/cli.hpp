// convoice/cli.hpp

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace convoice {

// Exit codes: 0 success, 1 runtime/pipeline error, 2 usage error.
int CliMain(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int CliMain(int argc, char** argv);

}  // namespace convoice
