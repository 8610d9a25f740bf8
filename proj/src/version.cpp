#include "g2cl/version.hpp"

namespace g2cl {

std::string version() { return G2CL_VERSION; }
std::string git_describe() { return G2CL_GIT_DESCRIBE; }

}  // namespace g2cl
