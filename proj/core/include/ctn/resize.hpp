#pragma once

#include "ctn/volume.hpp"

namespace ctn {

/// Trilinear intensity resampling (half-pixel centers, edge clamp); output
/// spacing is rescaled so the physical extent is preserved.
Volume resize_volume(const Volume& v, std::array<int64_t, 3> target);

/// Nearest-neighbor label resampling; values stay in {0,1,2}.
LabelMask resize_mask(const LabelMask& m, std::array<int64_t, 3> target);

}  // namespace ctn
