// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each check pins its own tolerances and runtime budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ctn/checkpoint.hpp"
#include "ctn/config.hpp"
#include "ctn/metrics.hpp"
#include "ctn/phantom.hpp"
#include "ctn/skeleton.hpp"
#include "ctn/train.hpp"
#include "ctn/volio.hpp"

#include "swin_reference.hpp"
#include "test_util.hpp"

using namespace ctn;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail = "") {
  std::cout << (pass ? "PASS" : "FAIL") << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CtnConfig toy_ctn(std::array<int64_t, 3> input) {
  CtnConfig cfg;
  cfg.unet.stage_channels = {8, 16, 32, 64};
  cfg.swin.stage_channels = {8, 16, 32, 64};
  cfg.swin.stage_depths = {2, 2, 2, 2};
  cfg.swin.num_heads = {2, 2, 4, 4};
  cfg.input_size = input;
  return cfg;
}

// ---------------------------------------------------------------- criterion 1
void check_attention_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::array<int64_t, 3> grid{8, 8, 8}, window{4, 4, 4};
  const int64_t dim = 12, heads = 3, N = 512;

  double worst = 0;
  for (bool shifted : {false, true}) {
    nn::ParamStore ps;
    Rng rng(shifted ? 11u : 10u);
    WindowAttention attn(ps, "attn", dim, heads, window, true, rng);
    Rng xr(99);
    Tensor xt = test::random_tensor({1, N, dim}, xr);

    std::array<int64_t, 3> shift{0, 0, 0};
    if (shifted) shift = {2, 2, 2};
    const WindowGeom geom = WindowGeom::make(grid, window, shift);
    Var out = window_unpartition(
        attn(window_partition(make_leaf(xt), geom), attention_mask(geom)), geom, 1);

    std::vector<double> tokens(static_cast<size_t>(N * dim));
    for (int64_t i = 0; i < N * dim; ++i) tokens[static_cast<size_t>(i)] = xt[i];
    const auto ref = test::dense_window_attention(
        tokens, grid, window, geom.shift, heads, ps.find("attn.qkv.weight")->value,
        ps.find("attn.qkv.bias")->value, ps.find("attn.proj.weight")->value,
        ps.find("attn.proj.bias")->value, ps.find("attn.rel_bias")->value);
    for (int64_t i = 0; i < N * dim; ++i)
      worst = std::max(worst, std::abs(out->value[i] - ref[static_cast<size_t>(i)]));
  }
  const double dt = seconds_since(t0);
  char detail[128];
  std::snprintf(detail, sizeof(detail), "max-abs %.2e, %.1fs", worst, dt);
  report("attention oracle: W-MSA and SW-MSA match dense masked attention on 8^3/4^3",
         worst <= 1e-5 && dt < 10.0, detail);
}

// ---------------------------------------------------------------- criterion 2
void check_shape_laws() {
  SwinConfig cfg;  // the configured tiny variant
  bool ok = cfg.stage_channels == std::array<int64_t, 4>{48, 96, 192, 384} &&
            cfg.stage_depths == std::array<int64_t, 4>{2, 2, 6, 2};

  nn::ParamStore ps;
  Rng rng(3);
  Swin3d net(ps, cfg, rng);
  Rng xr(4);
  Var x = make_leaf(test::random_tensor({1, 1, 64, 64, 64}, xr, 0.1));
  const auto features = net.forward(x);
  ok = ok && features.size() == 4;
  for (int j = 0; ok && j < 4; ++j) {
    const int64_t side = 64 / (4LL << j);  // the /4, /8, /16, /32 law
    ok = features[j]->value.shape() ==
         std::vector<int64_t>{1, cfg.stage_channels[j], side, side, side};
  }
  report("shape laws: stage channels {48,96,192,384}, depths {2,2,6,2}, strides /4../32", ok);
}

// ---------------------------------------------------------------- criterion 3
void check_reduction_invariants() {
  const std::array<int64_t, 3> input{32, 32, 32};
  Rng xr(5);
  Tensor xt = test::random_tensor({1, 1, input[0], input[1], input[2]}, xr);

  CtnConfig cfg = toy_ctn(input);
  cfg.fusion.enabled_stages = {};
  nn::ParamStore ps_off;
  Rng r_off(6);
  Ctn off(ps_off, cfg, r_off);

  nn::ParamStore ps_unet;
  Rng r_unet(6);
  UNet3d unet(ps_unet, cfg.unet, r_unet, "unet");

  Var y_off = off.forward(make_leaf(xt));
  Var y_unet = unet.forward(make_leaf(xt));
  bool eq1 = y_off->value.shape() == y_unet->value.shape();
  for (int64_t i = 0; eq1 && i < y_off->value.numel(); ++i)
    eq1 = y_off->value[i] == y_unet->value[i];

  cfg.fusion.enabled_stages = {1, 2, 3, 4};
  cfg.fusion.mode = FusionMode::add;
  nn::ParamStore ps_on;
  Rng r_on(6);
  Ctn on(ps_on, cfg, r_on);
  for (const auto& [name, p] : ps_on.params())
    if (name.rfind("swin.", 0) == 0 || name.rfind("fusion.", 0) == 0) p->value.fill(0.0);
  Var y_zeroed = on.forward(make_leaf(xt));
  bool eq2 = y_zeroed->value.shape() == y_unet->value.shape();
  for (int64_t i = 0; eq2 && i < y_zeroed->value.numel(); ++i)
    eq2 = y_zeroed->value[i] == y_unet->value[i];

  report("reduction: enabled_stages={} gives bit-equal baseline U-Net output", eq1);
  report("reduction: add-mode with zeroed transformer branch is bit-equal", eq2);
}

// ---------------------------------------------------------------- criterion 4
void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::array<int64_t, 3> input{16, 16, 16};
  CtnConfig cfg = toy_ctn(input);
  nn::ParamStore ps;
  Rng rng(7);
  Ctn model(ps, cfg, rng);
  // Jitter every parameter so no ReLU preactivation sits exactly on its
  // kink (instance norm over a 1^3 map outputs exactly beta, which is zero
  // at initialization); finite differences are undefined at the kink.
  Rng jr(77);
  for (const auto& [name, p] : ps.params())
    for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += 0.1 * (jr.uniform() - 0.5);

  Rng xr(8);
  Tensor image = test::random_tensor({1, 1, 16, 16, 16}, xr);
  Tensor labels({1, 16, 16, 16});
  for (int64_t i = 0; i < labels.numel(); ++i)
    labels[i] = static_cast<real>(xr.randint(3));

  auto loss_fn = [&] {
    return ops::dice_ce_loss(model.forward(make_leaf(image)), labels, 1.0, 1.0);
  };
  Var loss = loss_fn();
  backward(loss);

  // Sample >= 200 parameter entries across all tensors.
  struct Pick {
    Var p;
    int64_t idx;
    double analytic;
    std::string name;
  };
  std::vector<Pick> picks;
  Rng pr(9);
  const auto& params = ps.params();
  while (picks.size() < 200) {
    const auto& [name, p] = params[pr.randint(params.size())];
    const int64_t idx = static_cast<int64_t>(pr.randint(static_cast<uint64_t>(p->value.numel())));
    picks.push_back({p, idx, p->grad[idx], name});
  }

  int failures = 0;
  double worst_rel = 0;
  const double eps = 1e-5;
  for (const auto& pick : picks) {
    const real saved = pick.p->value[pick.idx];
    pick.p->value[pick.idx] = saved + eps;
    const double up = loss_fn()->value[0];
    pick.p->value[pick.idx] = saved - eps;
    const double down = loss_fn()->value[0];
    pick.p->value[pick.idx] = saved;
    const double fd = (up - down) / (2 * eps);
    const double abs_err = std::abs(fd - pick.analytic);
    if (abs_err <= 1e-5) continue;  // absolute floor
    const double rel = abs_err / std::max(std::abs(fd), std::abs(pick.analytic));
    worst_rel = std::max(worst_rel, rel);
    if (rel > 1e-3) {
      ++failures;
      std::cout << "  gradient mismatch at " << pick.name << "[" << pick.idx << "]: analytic "
                << pick.analytic << " vs fd " << fd << std::endl;
    }
  }
  const double dt = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "%zu entries, %d failures, worst rel %.2e, %.0fs",
                picks.size(), failures, worst_rel, dt);
  report("gradient check: toy model on 16^3 vs central finite differences",
         failures == 0 && dt < 300.0, detail);
}

// ---------------------------------------------------------------- criterion 5
void check_metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(11);
  bool dice_ok = true, assd_ok = true, srsp_ok = true;
  double assd_worst = 0;

  for (int trial = 0; trial < 1000; ++trial) {
    const double p = 0.05 + 0.30 * rng.uniform();
    BinaryMask s, g;
    s.shape = g.shape = {16, 16, 16};
    s.spacing = g.spacing = {1.0, 0.8, 1.2};
    s.data.resize(4096);
    g.data.resize(4096);
    for (auto& v : s.data) v = rng.uniform() < p;
    for (auto& v : g.data) v = rng.uniform() < p;

    // Dice: exact set counting.
    int64_t inter = 0, total = 0;
    for (size_t i = 0; i < 4096; ++i) {
      inter += (s.data[i] && g.data[i]);
      total += (s.data[i] != 0) + (g.data[i] != 0);
    }
    const double dice_expect = total ? 2.0 * inter / static_cast<double>(total) : 1.0;
    dice_ok = dice_ok && dice(s, g) == dice_expect;

    // ASSD: all-pairs nearest-surface reference.
    const auto ts = extract_surface(s), tg = extract_surface(g);
    if (!ts.empty() && !tg.empty()) {
      auto side = [&](const auto& from, const auto& to) {
        double sum = 0;
        for (const auto& a : from) {
          double best = 1e300;
          for (const auto& b : to) {
            const double dz = (a[0] - b[0]) * 1.0, dy = (a[1] - b[1]) * 0.8,
                         dx = (a[2] - b[2]) * 1.2;
            best = std::min(best, dz * dz + dy * dy + dx * dx);
          }
          sum += std::sqrt(best);
        }
        return sum;
      };
      const double expect = (side(ts, tg) + side(tg, ts)) / static_cast<double>(ts.size() + tg.size());
      const double got = assd(s, g);
      assd_worst = std::max(assd_worst, std::abs(got - expect));
      assd_ok = assd_ok && std::abs(got - expect) <= 1e-6;
    }

    // SR/SP: exact set counting over independently computed skeletons.
    const BinaryMask qs = skeletonize(s), qg = skeletonize(g);
    int64_t qg_n = 0, qs_n = 0, sr_hit = 0, sp_hit = 0;
    for (size_t i = 0; i < 4096; ++i) {
      if (qg.data[i]) {
        ++qg_n;
        sr_hit += s.data[i] != 0;
      }
      if (qs.data[i]) {
        ++qs_n;
        sp_hit += g.data[i] != 0;
      }
    }
    auto [sr, sp] = skeleton_metrics(s, g);
    srsp_ok = srsp_ok && sr == (qg_n ? static_cast<double>(sr_hit) / qg_n : 0.0) &&
              sp == (qs_n ? static_cast<double>(sp_hit) / qs_n : 0.0);
  }
  const double dt = seconds_since(t0);
  char detail[128];
  std::snprintf(detail, sizeof(detail), "dice %s, assd worst %.1e, sr/sp %s, %.0fs",
                dice_ok ? "exact" : "MISMATCH", assd_worst, srsp_ok ? "exact" : "MISMATCH", dt);
  report("metric oracles: 1000 random 16^3 pairs vs brute-force references",
         dice_ok && assd_ok && srsp_ok && dt < 120.0, detail);
}

// ---------------------------------------------------------------- criterion 6
void check_skeleton_fidelity() {
  Rng rng(2024);
  bool ok = true;
  for (int trial = 0; trial < 50 && ok; ++trial) {
    const double radius = 1.0 + 2.0 * rng.uniform();
    const int64_t n = 24;
    BinaryMask m;
    m.shape = {n, n, n};
    m.data.assign(static_cast<size_t>(n * n * n), 0);
    const double margin = radius + 2.0;
    std::array<double, 3> p0{margin, margin + rng.uniform() * (n - 1 - 2 * margin),
                             margin + rng.uniform() * (n - 1 - 2 * margin)};
    std::array<double, 3> p1{n - 1 - margin, margin + rng.uniform() * (n - 1 - 2 * margin),
                             margin + rng.uniform() * (n - 1 - 2 * margin)};
    auto dist_to_line = [&](double z, double y, double x) {
      const double az = z - p0[0], ay = y - p0[1], ax = x - p0[2];
      const double bz = p1[0] - p0[0], by = p1[1] - p0[1], bx = p1[2] - p0[2];
      double u = (az * bz + ay * by + ax * bx) / (bz * bz + by * by + bx * bx);
      u = std::clamp(u, 0.0, 1.0);
      const double dz = az - u * bz, dy = ay - u * by, dx = ax - u * bx;
      return std::sqrt(dz * dz + dy * dy + dx * dx);
    };
    for (int64_t z = 0; z < n; ++z)
      for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x)
          if (dist_to_line(z, y, x) <= radius) m.at(z, y, x) = 1;

    const int components_before = count_components_26(m);
    const BinaryMask s = skeletonize(m);
    ok = ok && s.count() > 0;
    ok = ok && count_components_26(s) == components_before;
    for (int64_t z = 0; z < n && ok; ++z)
      for (int64_t y = 0; y < n && ok; ++y)
        for (int64_t x = 0; x < n && ok; ++x)
          if (s.at(z, y, x)) ok = dist_to_line(z, y, x) <= 2.0;
  }
  report("skeleton fidelity: 50 random tubes (radius 1-3), connectivity + centerline", ok);
}

// ---------------------------------------------------------------- criterion 7
struct Cohort {
  std::vector<Tensor> images;
  std::vector<Tensor> labels;
  std::vector<LabelMask> gt;
};

Cohort make_cohort(int count, uint64_t seed0) {
  Cohort c;
  for (int i = 0; i < count; ++i) {
    PhantomSpec spec;
    spec.seed = seed0 + static_cast<uint64_t>(i);
    spec.grid_size = 64;
    auto [vol, mask] = generate_phantom(spec);
    c.images.push_back(normalize_volume(vol));
    c.labels.push_back(labels_to_tensor(mask));
    c.gt.push_back(std::move(mask));
  }
  return c;
}

double coronary_dice(const Ctn& model, const Cohort& c) {
  double sum = 0;
  for (size_t i = 0; i < c.images.size(); ++i) {
    const LabelMask pred = predict_labels(model, c.images[i]);
    sum += dice(class_mask(pred, 2), class_mask(c.gt[i], 2));
  }
  return sum / static_cast<double>(c.images.size());
}

MetricsReport mean_report(const Ctn& model, const Cohort& c) {
  MetricsReport mean;
  for (size_t i = 0; i < c.images.size(); ++i) {
    const LabelMask pred = predict_labels(model, c.images[i]);
    const MetricsReport r = evaluate(pred, c.gt[i]);
    mean.dice += r.dice;
    mean.dice_a += r.dice_a;
    mean.dice_c += r.dice_c;
    mean.assd_mm += r.assd_mm;
    mean.sp += r.sp;
    mean.sr += r.sr;
  }
  const double n = static_cast<double>(c.images.size());
  mean.dice /= n;
  mean.dice_a /= n;
  mean.dice_c /= n;
  mean.assd_mm /= n;
  mean.sp /= n;
  mean.sr /= n;
  return mean;
}

int train_until(Ctn& model, AdamW& opt, const Cohort& c, const TrainConfig& cfg, double lr,
                int max_steps, double target_dice, double* reached) {
  int step = 0;
  while (step < max_steps) {
    for (size_t i = 0; i < c.images.size() && step < max_steps; ++i) {
      train_step(model, opt, c.images[i], c.labels[i], lr, cfg);
      ++step;
    }
    if (step % 20 == 0 || step >= max_steps) {
      const double d = coronary_dice(model, c);
      *reached = d;
      if (d >= target_dice) return step;
    }
  }
  return -1;
}

void check_overfit_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const Cohort train = make_cohort(4, 500);

  TrainConfig cfg;
  cfg.weight_decay = 0.0;

  CtnConfig mc = toy_ctn({64, 64, 64});
  nn::ParamStore ps;
  Rng rng(21);
  Ctn model(ps, mc, rng);
  AdamW opt(ps, cfg);
  double reached = 0;
  const int steps = train_until(model, opt, train, cfg, 1e-3, 200, 0.90, &reached);
  const double train_time = seconds_since(t0);
  char detail[160];
  std::snprintf(detail, sizeof(detail), "coronary DICE %.3f after %d steps, %.0fs", reached,
                steps, train_time);
  report("overfit smoke: train coronary DICE >= 0.90 within 200 steps on 4 phantoms at 64^3",
         steps > 0 && steps <= 200, detail);

  // Baseline (fusion disabled) vs the fused model on a held-out 20-phantom
  // test split; both must produce the full six-column report.
  CtnConfig bc = toy_ctn({64, 64, 64});
  bc.fusion.enabled_stages = {};
  nn::ParamStore ps_b;
  Rng rng_b(21);
  Ctn baseline(ps_b, bc, rng_b);
  AdamW opt_b(ps_b, cfg);
  double reached_b = 0;
  train_until(baseline, opt_b, train, cfg, 1e-3, 60, 2.0, &reached_b);

  const Cohort test = make_cohort(20, 9000);
  const MetricsReport ctn_row = mean_report(model, test);
  const MetricsReport unet_row = mean_report(baseline, test);
  auto finite_row = [](const MetricsReport& r) {
    return std::isfinite(r.dice) && std::isfinite(r.dice_a) && std::isfinite(r.dice_c) &&
           std::isfinite(r.assd_mm) && std::isfinite(r.sp) && std::isfinite(r.sr);
  };
  std::printf("  %-8s %6s %6s %6s %8s %6s %6s\n", "model", "DICE", "DICE_A", "DICE_C", "ASSD_mm",
              "SP", "SR");
  std::printf("  %-8s %6.3f %6.3f %6.3f %8.3f %6.3f %6.3f\n", "UNet", unet_row.dice,
              unet_row.dice_a, unet_row.dice_c, unet_row.assd_mm, unet_row.sp, unet_row.sr);
  std::printf("  %-8s %6.3f %6.3f %6.3f %8.3f %6.3f %6.3f\n", "CTN", ctn_row.dice, ctn_row.dice_a,
              ctn_row.dice_c, ctn_row.assd_mm, ctn_row.sp, ctn_row.sr);
  const double dt = seconds_since(t0);
  std::snprintf(detail, sizeof(detail), "all six columns finite, %.0fs total", dt);
  report("overfit smoke: baseline-vs-CTN comparison on a 20-phantom test split",
         finite_row(ctn_row) && finite_row(unet_row) && dt < 1800.0, detail);
}

// ---------------------------------------------------------------- criterion 8
void check_ablation_plumbing() {
  const fs::path tmp = fs::temp_directory_path() / "ctn_acceptance_ablate";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  const std::string common =
      " --set phantom.grid_size=32 --set \"phantom.aorta_radius=[3,4]\""
      " --set \"phantom.coronary_radius=[1.0,1.5]\"";
  const std::string model =
      " --set \"model.input_size=[32,32,32]\" --set \"model.unet.stage_channels=[4,8,16,32]\""
      " --set \"model.swin.stage_channels=[4,8,16,32]\""
      " --set \"model.swin.num_heads=[2,2,4,4]\" --set \"model.swin.stage_depths=[2,2,2,2]\"";
  const std::string ds = (tmp / "ds").string();
  std::string cmd = std::string(CTN_CLI_PATH) + " gen-data --set phantom.count=4" + common +
                    " --set phantom.train_fraction=0.5 --set phantom.val_fraction=0.25" +
                    " --set data.out_dir=" + ds + " >/dev/null 2>&1";
  bool ok = std::system(cmd.c_str()) == 0;

  cmd = std::string(CTN_CLI_PATH) + " ablate --set data.manifest=" + ds + "/manifest.tsv" +
        " --set data.out_dir=" + (tmp / "abl").string() + model +
        " --set train.max_steps=0 >/dev/null 2>&1";
  ok = ok && std::system(cmd.c_str()) == 0;

  auto read_rows = [&](const std::string& file) {
    std::ifstream in(tmp / "abl" / file);
    std::vector<std::string> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        header = false;
        continue;
      }
      if (!line.empty()) rows.push_back(line.substr(0, line.find('\t')));
    }
    return rows;
  };
  const auto stage_rows = read_rows("ablation_stages.tsv");
  const auto fusion_rows = read_rows("ablation_fusion.tsv");
  const std::vector<std::string> expect_stages{"none",       "stages_123", "stages_124",
                                               "stages_134", "stages_234", "stages_1234"};
  const std::vector<std::string> expect_fusion{"add", "concat"};
  ok = ok && stage_rows == expect_stages && fusion_rows == expect_fusion;
  char detail[96];
  std::snprintf(detail, sizeof(detail), "%zu stage rows, %zu fusion rows", stage_rows.size(),
                fusion_rows.size());
  report("ablation plumbing: 6-row stage grid and 2-row fusion-mode table", ok, detail);
  fs::remove_all(tmp);
}

// ---------------------------------------------------------------- criterion 9
void check_schedule() {
  TrainConfig cfg;
  bool ok = true;
  for (int e = 0; e < 200; ++e) {
    const double expect = e < 50 ? 1e-4 : e < 100 ? 1e-5 : e < 150 ? 1e-6 : 1e-7;
    ok = ok && std::abs(lr_at(e, cfg) - expect) <= 1e-18;
  }
  report("schedule: lr trace is {1e-4,1e-5,1e-6,1e-7} over epochs {0-49,...,150-199}", ok);
}

}  // namespace

int main() {
  std::cout << "acceptance suite" << std::endl;
  check_attention_oracle();
  check_shape_laws();
  check_reduction_invariants();
  check_gradients();
  check_metric_oracles();
  check_skeleton_fidelity();
  check_schedule();
  check_ablation_plumbing();
  check_overfit_smoke();
  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES PRESENT") << std::endl;
  return g_failures == 0 ? 0 : 1;
}
