#pragma once

#include <iosfwd>

namespace nap::cli {

/// Entry point of the `nap` command. Returns the process exit code:
/// 0 on success, 1 on a data error, 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nap::cli
