#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ctn/volume.hpp"

namespace ctn {

struct BinaryMask {
  std::array<int64_t, 3> shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<uint8_t> data;  // 0 or 1

  int64_t numel() const { return shape[0] * shape[1] * shape[2]; }
  uint8_t& at(int64_t z, int64_t y, int64_t x) {
    return data[(z * shape[1] + y) * shape[2] + x];
  }
  uint8_t at(int64_t z, int64_t y, int64_t x) const {
    return data[(z * shape[1] + y) * shape[2] + x];
  }
  int64_t count() const;
};

/// Extract the mask of label value `label` (or of any nonzero label when
/// label < 0) from a 3-class segmentation.
BinaryMask class_mask(const LabelMask& m, int label);

struct MetricsReport {
  double dice = 0, dice_a = 0, dice_c = 0;
  double assd_mm = 0;
  double sp = 0, sr = 0;
  struct Flags {
    bool dice_degenerate = false;
    bool dice_a_degenerate = false;
    bool dice_c_degenerate = false;
    bool assd_degenerate = false;
    bool sr_degenerate = false;
    bool sp_degenerate = false;
  } flags;
};

/// Dice overlap 2|S∩G| / (|S|+|G|); both empty -> 1 with degenerate flag.
double dice(const BinaryMask& s, const BinaryMask& g, bool* degenerate = nullptr);

/// Foreground voxels with at least one background 6-neighbor (out of bounds
/// counts as background).
std::vector<std::array<int64_t, 3>> extract_surface(const BinaryMask& m);

/// Average symmetric surface distance in mm. Throws when either surface is
/// empty (distance undefined).
double assd(const BinaryMask& s, const BinaryMask& g);

/// Skeleton recall/precision (SR, SP) with Q = skeletonize. Empty skeletons
/// report 0 with the matching degenerate flag.
std::pair<double, double> skeleton_metrics(const BinaryMask& s, const BinaryMask& g,
                                           bool* sr_degenerate = nullptr,
                                           bool* sp_degenerate = nullptr);

struct EvalOptions {
  bool skeleton_coronary_only = false;  // SR/SP on label 2 only instead of full foreground
};

MetricsReport evaluate(const LabelMask& pred, const LabelMask& gt,
                       const EvalOptions& opt = {});

/// Number of 26-connected foreground components (flood fill).
int count_components_26(const BinaryMask& m);

/// Exact squared Euclidean distance (in mm^2) from every voxel to the nearest
/// seed voxel, honoring anisotropic spacing.
std::vector<double> squared_edt(const std::vector<std::array<int64_t, 3>>& seeds,
                                std::array<int64_t, 3> shape, std::array<double, 3> spacing);

}  // namespace ctn
