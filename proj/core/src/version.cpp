#include "vdyn/version.hpp"

#ifndef VDYN_BUILD_ID
#define VDYN_BUILD_ID "dev"
#endif

namespace vdyn {

const char* build_id() { return VDYN_BUILD_ID; }

}  // namespace vdyn
