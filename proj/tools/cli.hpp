#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace obliv {

// Exit status: 0 success, 1 verification divergence, 2 usage error, 3 runtime
// failure (unreadable or invalid input, capability shortfall).
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace obliv
