#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ctn {

/// Scalar intensity grid, C-order [D,H,W] (depth-major), float32 payload.
struct Volume {
  std::array<int64_t, 3> shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per voxel
  std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm
  std::vector<float> data;

  int64_t numel() const { return shape[0] * shape[1] * shape[2]; }
  float& at(int64_t z, int64_t y, int64_t x) {
    return data[(z * shape[1] + y) * shape[2] + x];
  }
  float at(int64_t z, int64_t y, int64_t x) const {
    return data[(z * shape[1] + y) * shape[2] + x];
  }
};

/// Segmentation labels: 0 background, 1 aorta, 2 coronary.
struct LabelMask {
  std::array<int64_t, 3> shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<uint8_t> data;

  int64_t numel() const { return shape[0] * shape[1] * shape[2]; }
  uint8_t& at(int64_t z, int64_t y, int64_t x) {
    return data[(z * shape[1] + y) * shape[2] + x];
  }
  uint8_t at(int64_t z, int64_t y, int64_t x) const {
    return data[(z * shape[1] + y) * shape[2] + x];
  }
};

}  // namespace ctn
