#include "ctn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ctn/rng.hpp"

namespace ctn {

namespace {

struct Vec3 {
  double z, y, x;
  Vec3 operator+(const Vec3& o) const { return {z + o.z, y + o.y, x + o.x}; }
  Vec3 operator-(const Vec3& o) const { return {z - o.z, y - o.y, x - o.x}; }
  Vec3 operator*(double s) const { return {z * s, y * s, x * s}; }
  double norm() const { return std::sqrt(z * z + y * y + x * x); }
};

Vec3 normalize(const Vec3& v) {
  const double n = v.norm();
  return n > 1e-12 ? v * (1.0 / n) : Vec3{0, 1, 0};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.x - a.x * b.y, a.x * b.z - a.z * b.x, a.z * b.y - a.y * b.z};
}

class Rasterizer {
 public:
  Rasterizer(LabelMask& mask, int64_t n) : mask_(mask), n_(n) {}

  void stamp_sphere(const Vec3& c, double r, uint8_t label) {
    const int64_t z0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.z - r)));
    const int64_t z1 = std::min(n_ - 1, static_cast<int64_t>(std::ceil(c.z + r)));
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.y - r)));
    const int64_t y1 = std::min(n_ - 1, static_cast<int64_t>(std::ceil(c.y + r)));
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.x - r)));
    const int64_t x1 = std::min(n_ - 1, static_cast<int64_t>(std::ceil(c.x + r)));
    const double r2 = r * r;
    for (int64_t z = z0; z <= z1; ++z)
      for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
          const double dz = z - c.z, dy = y - c.y, dx = x - c.x;
          if (dz * dz + dy * dy + dx * dx > r2) continue;
          uint8_t& v = mask_.at(z, y, x);
          if (label == 2 && v == 1) continue;  // aorta keeps its label
          v = label;
        }
  }

  void stamp_bezier(const Vec3& p0, const Vec3& p1, const Vec3& p2, double r, uint8_t label) {
    const double approx_len = (p1 - p0).norm() + (p2 - p1).norm();
    const int steps = std::max(4, static_cast<int>(approx_len * 3));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const double u = 1.0 - t;
      const Vec3 p = p0 * (u * u) + p1 * (2 * u * t) + p2 * (t * t);
      stamp_sphere(p, r, label);
    }
  }

 private:
  LabelMask& mask_;
  int64_t n_;
};

struct TreeBuilder {
  Rasterizer& ras;
  Rng& rng;
  double n;
  double margin;
  double rmin, rmax;

  Vec3 clamp_box(const Vec3& p, double r) const {
    const double lo = margin + r, hi = n - 1 - margin - r;
    return {std::clamp(p.z, lo, hi), std::clamp(p.y, lo, hi), std::clamp(p.x, lo, hi)};
  }

  void branch(const Vec3& start, Vec3 dir, double radius, int depth, int gen) {
    // Keep the tree growing away from the aorta (+y half space).
    if (dir.y < 0.05) {
      dir.y = 0.05 + 0.3 * rng.uniform();
      dir = normalize(dir);
    }
    const double len = n * 0.16 * std::pow(0.82, gen) * (0.8 + 0.4 * rng.uniform());
    Vec3 end = clamp_box(start + dir * len, radius);
    const Vec3 axis = normalize(end - start);
    Vec3 perp = normalize(cross(axis, {rng.normal(), rng.normal(), rng.normal()}));
    Vec3 ctrl = clamp_box((start + end) * 0.5 + perp * (len * 0.25 * rng.uniform()), radius);
    ras.stamp_bezier(start, ctrl, end, radius, 2);
    if (depth <= 0) return;
    const double child_r = std::max(radius * 0.72, rmin);
    for (int k = 0; k < 2; ++k) {
      const double ang = (0.4 + 0.5 * rng.uniform()) * (k == 0 ? 1.0 : -1.0);
      // Rotate the axis about a random perpendicular by ang.
      const Vec3 rp = normalize(cross(axis, perp + Vec3{0.1 * k, 0.2, 0.1}));
      Vec3 cdir = normalize(axis * std::cos(ang) + rp * std::sin(ang));
      branch(end, cdir, child_r, depth - 1, gen + 1);
    }
  }
};

}  // namespace

std::pair<Volume, LabelMask> generate_phantom(const PhantomSpec& spec) {
  const int64_t N = spec.grid_size;
  if (N < 16) throw std::invalid_argument("phantom grid too small");
  if (spec.aorta_radius_range.first < 3.0)
    throw std::invalid_argument("aorta radius min must be >= 3 voxels");
  if (spec.coronary_radius_range.first < 1.0)
    throw std::invalid_argument("coronary radius min must be >= 1 voxel");
  if (spec.noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");

  Rng rng(spec.seed);
  const double margin = 2.0;
  const double ra = rng.uniform(spec.aorta_radius_range.first, spec.aorta_radius_range.second);
  const double cy = 0.30 * N;
  const double cx = 0.50 * N;
  const double amp = 0.06 * N;
  if (cy - amp - ra < margin || cy + amp + ra > N - 1 - margin || cx - ra < margin ||
      cx + ra > N - 1 - margin)
    throw std::invalid_argument("aorta radius too large for grid");

  LabelMask mask;
  mask.shape = {N, N, N};
  mask.data.assign(static_cast<size_t>(N * N * N), 0);
  Rasterizer ras(mask, N);

  // Aorta: gently arcing near-vertical tube.
  const double z_lo = margin + ra, z_hi = N - 1 - margin - ra;
  const int steps = static_cast<int>((z_hi - z_lo) * 2);
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const Vec3 c{z_lo + t * (z_hi - z_lo), cy + amp * std::sin(M_PI * t),
                 cx + 0.5 * amp * std::sin(2 * M_PI * t)};
    ras.stamp_sphere(c, ra, 1);
  }

  // Coronary tree rooted on the aorta surface, growing in +y.
  const double rc =
      rng.uniform(spec.coronary_radius_range.first, spec.coronary_radius_range.second);
  const double t0 = 0.35 + 0.3 * rng.uniform();
  const Vec3 root{z_lo + t0 * (z_hi - z_lo), cy + amp * std::sin(M_PI * t0) + ra - rc * 0.5,
                  cx + 0.5 * amp * std::sin(2 * M_PI * t0)};
  TreeBuilder tb{ras, rng, static_cast<double>(N), margin, spec.coronary_radius_range.first,
                 spec.coronary_radius_range.second};
  tb.branch(root, normalize({0.2 * rng.normal(), 1.0, 0.3 * rng.normal()}), rc,
            spec.branch_depth, 0);

  Volume vol;
  vol.shape = {N, N, N};
  vol.data.resize(static_cast<size_t>(N * N * N));
  for (size_t i = 0; i < vol.data.size(); ++i) {
    const double mean =
        mask.data[i] == 0 ? spec.background_intensity : spec.foreground_intensity;
    const double noise = spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0;
    vol.data[i] = static_cast<float>(mean + noise);
  }
  return {std::move(vol), std::move(mask)};
}

}  // namespace ctn
