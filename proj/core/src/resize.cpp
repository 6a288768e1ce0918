#include "ctn/resize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctn {

namespace {

void check_target(const std::array<int64_t, 3>& target) {
  for (int64_t t : target)
    if (t < 1) throw std::invalid_argument("resize target dims must be >= 1");
}

double src_coord(int64_t o, int64_t in, int64_t out) {
  double s = (o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(in - 1));
}

}  // namespace

Volume resize_volume(const Volume& v, std::array<int64_t, 3> target) {
  check_target(target);
  Volume out;
  out.shape = target;
  out.origin = v.origin;
  for (int a = 0; a < 3; ++a)
    out.spacing[a] = v.spacing[a] * static_cast<double>(v.shape[a]) / target[a];
  out.data.resize(static_cast<size_t>(out.numel()));
  const int64_t D = v.shape[0], H = v.shape[1], W = v.shape[2];
  for (int64_t oz = 0; oz < target[0]; ++oz) {
    const double sz = src_coord(oz, D, target[0]);
    const int64_t z0 = static_cast<int64_t>(sz), z1 = std::min(z0 + 1, D - 1);
    const double wz = sz - z0;
    for (int64_t oy = 0; oy < target[1]; ++oy) {
      const double sy = src_coord(oy, H, target[1]);
      const int64_t y0 = static_cast<int64_t>(sy), y1 = std::min(y0 + 1, H - 1);
      const double wy = sy - y0;
      for (int64_t ox = 0; ox < target[2]; ++ox) {
        const double sx = src_coord(ox, W, target[2]);
        const int64_t x0 = static_cast<int64_t>(sx), x1 = std::min(x0 + 1, W - 1);
        const double wx = sx - x0;
        const double c00 = v.at(z0, y0, x0) * (1 - wx) + v.at(z0, y0, x1) * wx;
        const double c01 = v.at(z0, y1, x0) * (1 - wx) + v.at(z0, y1, x1) * wx;
        const double c10 = v.at(z1, y0, x0) * (1 - wx) + v.at(z1, y0, x1) * wx;
        const double c11 = v.at(z1, y1, x0) * (1 - wx) + v.at(z1, y1, x1) * wx;
        const double c0 = c00 * (1 - wy) + c01 * wy;
        const double c1 = c10 * (1 - wy) + c11 * wy;
        out.at(oz, oy, ox) = static_cast<float>(c0 * (1 - wz) + c1 * wz);
      }
    }
  }
  return out;
}

LabelMask resize_mask(const LabelMask& m, std::array<int64_t, 3> target) {
  check_target(target);
  LabelMask out;
  out.shape = target;
  out.origin = m.origin;
  for (int a = 0; a < 3; ++a)
    out.spacing[a] = m.spacing[a] * static_cast<double>(m.shape[a]) / target[a];
  out.data.resize(static_cast<size_t>(out.numel()));
  for (int64_t oz = 0; oz < target[0]; ++oz) {
    const int64_t z = static_cast<int64_t>(std::lround(src_coord(oz, m.shape[0], target[0])));
    for (int64_t oy = 0; oy < target[1]; ++oy) {
      const int64_t y = static_cast<int64_t>(std::lround(src_coord(oy, m.shape[1], target[1])));
      for (int64_t ox = 0; ox < target[2]; ++ox) {
        const int64_t x = static_cast<int64_t>(std::lround(src_coord(ox, m.shape[2], target[2])));
        out.at(oz, oy, ox) = m.at(z, y, x);
      }
    }
  }
  return out;
}

}  // namespace ctn
