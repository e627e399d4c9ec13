#pragma once

#include <iosfwd>

namespace sketchmotion::cli {

/// Runs the `sketchmotion` command line. Returns 0 on success, 2 on invalid
/// input (bad flags, schema or validation errors), 1 on runtime failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sketchmotion::cli
