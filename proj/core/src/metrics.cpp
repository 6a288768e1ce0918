#include "ctn/metrics.hpp"

#include "ctn/skeleton.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace ctn {

namespace {

void check_pair(const BinaryMask& s, const BinaryMask& g) {
  if (s.shape != g.shape) throw std::invalid_argument("metrics: mask shape mismatch");
}

}  // namespace

int64_t BinaryMask::count() const {
  int64_t n = 0;
  for (uint8_t v : data) n += (v != 0);
  return n;
}

BinaryMask class_mask(const LabelMask& m, int label) {
  BinaryMask b;
  b.shape = m.shape;
  b.spacing = m.spacing;
  b.data.resize(m.data.size());
  for (size_t i = 0; i < m.data.size(); ++i)
    b.data[i] = label < 0 ? (m.data[i] != 0) : (m.data[i] == label);
  return b;
}

double dice(const BinaryMask& s, const BinaryMask& g, bool* degenerate) {
  check_pair(s, g);
  int64_t inter = 0, ns = 0, ng = 0;
  for (size_t i = 0; i < s.data.size(); ++i) {
    const bool a = s.data[i] != 0, b = g.data[i] != 0;
    inter += (a && b);
    ns += a;
    ng += b;
  }
  if (degenerate) *degenerate = (ns + ng == 0);
  if (ns + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(ns + ng);
}

std::vector<std::array<int64_t, 3>> extract_surface(const BinaryMask& m) {
  std::vector<std::array<int64_t, 3>> out;
  const auto [D, H, W] = m.shape;
  for (int64_t z = 0; z < D; ++z)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        if (!m.at(z, y, x)) continue;
        const bool surface =
            z == 0 || z == D - 1 || y == 0 || y == H - 1 || x == 0 || x == W - 1 ||
            !m.at(z - 1, y, x) || !m.at(z + 1, y, x) || !m.at(z, y - 1, x) ||
            !m.at(z, y + 1, x) || !m.at(z, y, x - 1) || !m.at(z, y, x + 1);
        if (surface) out.push_back({z, y, x});
      }
  return out;
}

namespace {

// 1D lower-envelope distance transform over samples at positions pos[i].
void edt_1d(const std::vector<double>& f, const std::vector<double>& pos, std::vector<double>& out) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto sect = [&](int i, int j) {
    return ((f[i] + pos[i] * pos[i]) - (f[j] + pos[j] * pos[j])) / (2 * pos[i] - 2 * pos[j]);
  };
  for (int i = 1; i < n; ++i) {
    if (std::isinf(f[i]) && f[i] > 0) continue;  // empty parabola
    double s = k >= 0 && !std::isinf(f[v[k]]) ? sect(i, v[k]) : -std::numeric_limits<double>::infinity();
    while (k > 0 && s <= z[k]) {
      --k;
      s = sect(i, v[k]);
    }
    if (std::isinf(f[v[k]]) && f[v[k]] > 0) {
      v[k] = i;  // replace the infinite parabola
    } else {
      ++k;
      v[k] = i;
    }
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < pos[q]) ++k;
    const double d = pos[q] - pos[v[k]];
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_edt(const std::vector<std::array<int64_t, 3>>& seeds,
                                std::array<int64_t, 3> shape, std::array<double, 3> spacing) {
  const auto [D, H, W] = shape;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<size_t>(D * H * W), inf);
  for (const auto& s : seeds) dist[(s[0] * H + s[1]) * W + s[2]] = 0.0;

  auto pass = [&](int axis) {
    const int64_t n = shape[axis];
    std::vector<double> f(n), out(n), pos(n);
    for (int64_t i = 0; i < n; ++i) pos[i] = i * spacing[axis];
    const int64_t a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    std::array<int64_t, 3> c{};
    for (c[a1] = 0; c[a1] < shape[a1]; ++c[a1])
      for (c[a2] = 0; c[a2] < shape[a2]; ++c[a2]) {
        bool any = false;
        for (c[axis] = 0; c[axis] < n; ++c[axis]) {
          f[c[axis]] = dist[(c[0] * H + c[1]) * W + c[2]];
          any = any || !std::isinf(f[c[axis]]);
        }
        if (!any) continue;
        edt_1d(f, pos, out);
        for (c[axis] = 0; c[axis] < n; ++c[axis])
          dist[(c[0] * H + c[1]) * W + c[2]] = out[c[axis]];
      }
  };
  pass(2);
  pass(1);
  pass(0);
  return dist;
}

double assd(const BinaryMask& s, const BinaryMask& g) {
  check_pair(s, g);
  if (s.spacing != g.spacing) throw std::invalid_argument("assd: spacing mismatch");
  const auto ts = extract_surface(s);
  const auto tg = extract_surface(g);
  if (ts.empty() || tg.empty())
    throw std::runtime_error("assd: undefined for an empty surface");
  const auto dist_to_s = squared_edt(ts, s.shape, s.spacing);
  const auto dist_to_g = squared_edt(tg, g.shape, g.spacing);
  const auto [D, H, W] = s.shape;
  (void)D;
  double total = 0;
  for (const auto& v : tg) total += std::sqrt(dist_to_s[(v[0] * H + v[1]) * W + v[2]]);
  for (const auto& v : ts) total += std::sqrt(dist_to_g[(v[0] * H + v[1]) * W + v[2]]);
  return total / static_cast<double>(ts.size() + tg.size());
}

std::pair<double, double> skeleton_metrics(const BinaryMask& s, const BinaryMask& g,
                                           bool* sr_degenerate, bool* sp_degenerate) {
  check_pair(s, g);
  const BinaryMask qg = skeletonize(g);
  const BinaryMask qs = skeletonize(s);
  int64_t qg_n = 0, qs_n = 0, sr_hit = 0, sp_hit = 0;
  for (size_t i = 0; i < s.data.size(); ++i) {
    if (qg.data[i]) {
      ++qg_n;
      if (s.data[i]) ++sr_hit;
    }
    if (qs.data[i]) {
      ++qs_n;
      if (g.data[i]) ++sp_hit;
    }
  }
  if (sr_degenerate) *sr_degenerate = (qg_n == 0);
  if (sp_degenerate) *sp_degenerate = (qs_n == 0);
  const double sr = qg_n ? static_cast<double>(sr_hit) / qg_n : 0.0;
  const double sp = qs_n ? static_cast<double>(sp_hit) / qs_n : 0.0;
  return {sr, sp};
}

MetricsReport evaluate(const LabelMask& pred, const LabelMask& gt, const EvalOptions& opt) {
  if (pred.shape != gt.shape) throw std::invalid_argument("evaluate: shape mismatch");
  MetricsReport r;
  const BinaryMask pf = class_mask(pred, -1);
  const BinaryMask gf = class_mask(gt, -1);
  r.dice = dice(pf, gf, &r.flags.dice_degenerate);
  r.dice_a = dice(class_mask(pred, 1), class_mask(gt, 1), &r.flags.dice_a_degenerate);
  r.dice_c = dice(class_mask(pred, 2), class_mask(gt, 2), &r.flags.dice_c_degenerate);
  try {
    r.assd_mm = assd(pf, gf);
  } catch (const std::runtime_error&) {
    r.assd_mm = 0.0;
    r.flags.assd_degenerate = true;
  }
  const BinaryMask& ps = opt.skeleton_coronary_only ? class_mask(pred, 2) : pf;
  const BinaryMask& gs = opt.skeleton_coronary_only ? class_mask(gt, 2) : gf;
  std::tie(r.sr, r.sp) = skeleton_metrics(ps, gs, &r.flags.sr_degenerate, &r.flags.sp_degenerate);
  return r;
}

int count_components_26(const BinaryMask& m) {
  const auto [D, H, W] = m.shape;
  std::vector<uint8_t> seen(m.data.size(), 0);
  std::vector<int64_t> stack;
  int components = 0;
  for (int64_t i = 0; i < m.numel(); ++i) {
    if (!m.data[i] || seen[i]) continue;
    ++components;
    seen[i] = 1;
    stack.push_back(i);
    while (!stack.empty()) {
      const int64_t cur = stack.back();
      stack.pop_back();
      const int64_t z = cur / (H * W), y = (cur / W) % H, x = cur % W;
      for (int64_t dz = -1; dz <= 1; ++dz)
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t nz = z + dz, ny = y + dy, nx = x + dx;
            if (nz < 0 || nz >= D || ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
            const int64_t j = (nz * H + ny) * W + nx;
            if (m.data[j] && !seen[j]) {
              seen[j] = 1;
              stack.push_back(j);
            }
          }
    }
  }
  return components;
}

}  // namespace ctn
