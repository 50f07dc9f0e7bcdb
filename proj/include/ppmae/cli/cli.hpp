#pragma once

#include <iosfwd>

namespace ppmae::cli {

// Entry point of the `ppmae` tool. Returns the process exit code: 0 on
// success, 1 on a reported error, 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ppmae::cli
