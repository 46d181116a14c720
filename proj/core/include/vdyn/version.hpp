#pragma once

namespace vdyn {

// Version+revision string baked in at configure time, embedded in artifact headers.
const char* build_id();

}  // namespace vdyn
