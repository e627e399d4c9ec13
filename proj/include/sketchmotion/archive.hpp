#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sketchmotion {

/// Uncompressed POSIX ustar archive of (name, contents) pairs. Names must be
/// relative and at most 100 bytes.
std::string make_tar(const std::vector<std::pair<std::string, std::string>>& files);

}  // namespace sketchmotion
