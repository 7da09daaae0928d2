#pragma once

#include <string>
#include <vector>

namespace vbody {

// Runs one CLI invocation (args exclude the program name). Returns the
// process exit code; errors are printed to stderr as
//   vbody: error: <category>: <message>
int cli_run(const std::vector<std::string>& args);

}  // namespace vbody
