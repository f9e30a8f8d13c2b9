#pragma once

#include <string>
#include <vector>

namespace docgraph::cli {

// Entry point shared by the docgraph executable and the tests. Returns the
// process exit code; diagnostics go to stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace docgraph::cli
