#pragma once

#include <string>

namespace g2cl {

std::string version();       // project version, e.g. "0.1.0"
std::string git_describe();  // `git describe` at configure time, or "unknown"

}  // namespace g2cl
