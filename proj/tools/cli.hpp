#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dmpopt::cli {

// args[0] is the program name. Returns 0 on success, 2 on usage or
// validation errors, 1 on runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmpopt::cli
