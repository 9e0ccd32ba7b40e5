#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace reidlab {

// Exit codes: 0 success, 1 validation failure, 2 usage error. JSON goes to
// `out`, human-readable tables and diagnostics to `err`. `args` excludes the
// program name.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, char** argv);

}  // namespace reidlab
