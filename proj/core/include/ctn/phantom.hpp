#pragma once

#include <cstdint>
#include <utility>

#include "ctn/volume.hpp"

namespace ctn {

/// Synthetic aorta + coronary-tree phantom: one thick curved tube (label 1)
/// with a recursively bifurcating tree of thin tubes (label 2) attached to it.
struct PhantomSpec {
  uint64_t seed = 0;
  int64_t grid_size = 64;
  std::pair<double, double> aorta_radius_range{5.0, 7.0};
  std::pair<double, double> coronary_radius_range{1.5, 2.5};
  int branch_depth = 3;
  double noise_sigma = 0.05;
  double foreground_intensity = 1.0;
  double background_intensity = 0.0;
};

std::pair<Volume, LabelMask> generate_phantom(const PhantomSpec& spec);

}  // namespace ctn
