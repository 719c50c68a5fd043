#pragma once

#include <iosfwd>

namespace lsub::cli {

/// Entry point of the `lsub` tool. Returns 0 on success, 1 when a command
/// fails and 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace lsub::cli
