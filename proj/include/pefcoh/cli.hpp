#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pefcoh::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kValidationFailure = 2 };

/// Entry point of the `pefcoh` tool: validate | evaluate | compare | synth.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace pefcoh::cli
