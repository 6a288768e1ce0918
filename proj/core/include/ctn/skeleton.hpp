#pragma once

#include "ctn/metrics.hpp"

namespace ctn {

/// Topology-preserving medial-axis thinning (6-subiteration directional thinning): iteratively
/// deletes simple border points until stable. Output is a subset of the
/// input with the same number of 26-connected components.
BinaryMask skeletonize(const BinaryMask& m);

}  // namespace ctn
