#include <doctest.h>

#include <cmath>

#include "ctn/metrics.hpp"
#include "ctn/rng.hpp"

using namespace ctn;

namespace {

BinaryMask empty_mask(std::array<int64_t, 3> shape, std::array<double, 3> spacing = {1, 1, 1}) {
  BinaryMask m;
  m.shape = shape;
  m.spacing = spacing;
  m.data.assign(static_cast<size_t>(m.numel()), 0);
  return m;
}

BinaryMask random_mask(std::array<int64_t, 3> shape, double p, Rng& rng) {
  BinaryMask m = empty_mask(shape);
  for (auto& v : m.data) v = rng.uniform() < p;
  return m;
}

// Brute-force counting reference for Dice.
double dice_ref(const BinaryMask& s, const BinaryMask& g) {
  int64_t inter = 0, total = 0;
  for (size_t i = 0; i < s.data.size(); ++i) {
    inter += (s.data[i] && g.data[i]);
    total += (s.data[i] != 0) + (g.data[i] != 0);
  }
  return total == 0 ? 1.0 : 2.0 * inter / static_cast<double>(total);
}

// All-pairs reference for the average symmetric surface distance.
double assd_ref(const BinaryMask& s, const BinaryMask& g) {
  const auto ts = extract_surface(s);
  const auto tg = extract_surface(g);
  auto nearest = [&](const std::array<int64_t, 3>& p,
                     const std::vector<std::array<int64_t, 3>>& set,
                     const std::array<double, 3>& sp) {
    double best = 1e300;
    for (const auto& q : set) {
      const double dz = (p[0] - q[0]) * sp[0];
      const double dy = (p[1] - q[1]) * sp[1];
      const double dx = (p[2] - q[2]) * sp[2];
      best = std::min(best, dz * dz + dy * dy + dx * dx);
    }
    return std::sqrt(best);
  };
  double total = 0;
  for (const auto& p : ts) total += nearest(p, tg, s.spacing);
  for (const auto& p : tg) total += nearest(p, ts, s.spacing);
  return total / static_cast<double>(ts.size() + tg.size());
}

}  // namespace

TEST_CASE("dice matches counting on random masks and handles degenerate cases") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const BinaryMask s = random_mask({6, 7, 5}, 0.3, rng);
    const BinaryMask g = random_mask({6, 7, 5}, 0.3, rng);
    CHECK(dice(s, g) == dice_ref(s, g));
  }
  bool degenerate = false;
  CHECK(dice(empty_mask({3, 3, 3}), empty_mask({3, 3, 3}), &degenerate) == 1.0);
  CHECK(degenerate);
  CHECK(dice(random_mask({3, 3, 3}, 1.0, rng), empty_mask({3, 3, 3}), &degenerate) == 0.0);
  CHECK(!degenerate);
}

TEST_CASE("surface extraction counts known solids") {
  // A solid 3x3x3 cube inside a larger grid: the single interior voxel is
  // not on the surface, the other 26 are.
  BinaryMask m = empty_mask({7, 7, 7});
  for (int64_t z = 2; z <= 4; ++z)
    for (int64_t y = 2; y <= 4; ++y)
      for (int64_t x = 2; x <= 4; ++x) m.at(z, y, x) = 1;
  CHECK(extract_surface(m).size() == 26);

  // A full grid has only its boundary shell as surface.
  BinaryMask full = empty_mask({4, 5, 6});
  for (auto& v : full.data) v = 1;
  const int64_t interior = (4 - 2) * (5 - 2) * (6 - 2);
  CHECK(extract_surface(full).size() == static_cast<size_t>(full.numel() - interior));
}

TEST_CASE("squared EDT is exact under anisotropic spacing") {
  const std::array<int64_t, 3> shape{5, 6, 4};
  const std::array<double, 3> spacing{1.5, 0.5, 2.0};
  Rng rng(2);
  std::vector<std::array<int64_t, 3>> seeds;
  for (int i = 0; i < 5; ++i)
    seeds.push_back({static_cast<int64_t>(rng.randint(5)), static_cast<int64_t>(rng.randint(6)),
                     static_cast<int64_t>(rng.randint(4))});
  const auto dist = squared_edt(seeds, shape, spacing);
  for (int64_t z = 0; z < 5; ++z)
    for (int64_t y = 0; y < 6; ++y)
      for (int64_t x = 0; x < 4; ++x) {
        double best = 1e300;
        for (const auto& s : seeds) {
          const double dz = (z - s[0]) * spacing[0];
          const double dy = (y - s[1]) * spacing[1];
          const double dx = (x - s[2]) * spacing[2];
          best = std::min(best, dz * dz + dy * dy + dx * dx);
        }
        REQUIRE(dist[(z * 6 + y) * 4 + x] == doctest::Approx(best).epsilon(1e-12));
      }
}

TEST_CASE("assd matches the all-pairs reference on random masks") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    BinaryMask s = random_mask({6, 6, 6}, 0.25, rng);
    BinaryMask g = random_mask({6, 6, 6}, 0.25, rng);
    s.spacing = g.spacing = {1.0, 0.75, 1.25};
    if (s.count() == 0 || g.count() == 0) continue;
    CHECK(assd(s, g) == doctest::Approx(assd_ref(s, g)).epsilon(1e-9));
  }
}

TEST_CASE("assd of identical masks is zero and shifted slabs measure the shift") {
  BinaryMask a = empty_mask({8, 8, 8});
  for (int64_t z = 2; z <= 3; ++z)
    for (int64_t y = 0; y < 8; ++y)
      for (int64_t x = 0; x < 8; ++x) a.at(z, y, x) = 1;
  CHECK(assd(a, a) == 0.0);
  CHECK_THROWS(assd(a, empty_mask({8, 8, 8})));
}

TEST_CASE("skeleton recall/precision behave on containment cases") {
  // Prediction fully covers the ground truth: its skeleton lies inside the
  // prediction, so recall is 1.
  BinaryMask g = empty_mask({10, 10, 10});
  for (int64_t x = 2; x <= 7; ++x)
    for (int64_t y = 4; y <= 5; ++y)
      for (int64_t z = 4; z <= 5; ++z) g.at(z, y, x) = 1;
  BinaryMask s = g;
  auto [sr, sp] = skeleton_metrics(s, g);
  CHECK(sr == 1.0);
  CHECK(sp == 1.0);

  // Disjoint masks: zero recall and precision.
  BinaryMask far = empty_mask({10, 10, 10});
  far.at(9, 9, 9) = 1;
  auto [sr2, sp2] = skeleton_metrics(far, g);
  CHECK(sr2 == 0.0);
  CHECK(sp2 == 0.0);

  // Empty prediction: degenerate precision flag.
  bool sr_deg = false, sp_deg = false;
  skeleton_metrics(empty_mask({10, 10, 10}), g, &sr_deg, &sp_deg);
  CHECK(!sr_deg);
  CHECK(sp_deg);
}

TEST_CASE("evaluate populates every report field") {
  LabelMask pred, gt;
  pred.shape = gt.shape = {10, 10, 10};
  pred.data.assign(1000, 0);
  gt.data.assign(1000, 0);
  for (int64_t x = 1; x <= 8; ++x) {
    gt.at(4, 4, x) = 1;
    pred.at(4, 4, x) = 1;
    gt.at(6, 6, x) = 2;
    pred.at(6, 6, x) = x < 7 ? 2 : 0;
  }
  const MetricsReport r = evaluate(pred, gt);
  CHECK(r.dice > 0.8);
  CHECK(r.dice_a == 1.0);
  CHECK(r.dice_c > 0.7);
  CHECK(r.assd_mm >= 0.0);
  CHECK(r.sr > 0.0);
  CHECK(r.sp > 0.0);
  CHECK(!r.flags.dice_degenerate);

  const MetricsReport rc = evaluate(pred, gt, {.skeleton_coronary_only = true});
  CHECK(rc.sr <= r.sr + 1e-12);

  LabelMask wrong = pred;
  wrong.shape = {10, 10, 5};
  wrong.data.resize(500);
  CHECK_THROWS(evaluate(wrong, gt));
}

TEST_CASE("26-connected component counting") {
  BinaryMask m = empty_mask({6, 6, 6});
  CHECK(count_components_26(m) == 0);
  m.at(0, 0, 0) = 1;
  CHECK(count_components_26(m) == 1);
  m.at(1, 1, 1) = 1;  // diagonal neighbor: still one component
  CHECK(count_components_26(m) == 1);
  m.at(4, 4, 4) = 1;
  CHECK(count_components_26(m) == 2);
}
