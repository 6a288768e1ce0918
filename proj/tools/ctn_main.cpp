#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctn/config.hpp"
#include "ctn/metrics.hpp"
#include "ctn/resize.hpp"
#include "ctn/train.hpp"
#include "ctn/volio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides, "Override: section.key=value (repeatable)");
}

ctn::RunConfig load(const CommonOpts& opts) {
  ctn::RunConfig cfg = ctn::load_config(opts.config_path, opts.overrides);
  cfg.out_dir = ctn::resolve_out_dir(cfg.out_dir);
  return cfg;
}

struct Model {
  ctn::nn::ParamStore ps;
  std::unique_ptr<ctn::Ctn> net;
};

Model build_model(const ctn::RunConfig& cfg, uint64_t seed) {
  Model m;
  ctn::Rng rng(seed);
  m.net = std::make_unique<ctn::Ctn>(m.ps, cfg.model, rng);
  return m;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

int cmd_gen_data(const ctn::RunConfig& cfg) {
  require(!cfg.out_dir.empty(), "gen-data: data.out_dir is required");
  fs::create_directories(cfg.out_dir);
  ctn::write_frozen_config(cfg, cfg.out_dir);

  const int n_train = static_cast<int>(cfg.phantom_count * cfg.train_fraction);
  const int n_val = static_cast<int>(cfg.phantom_count * (cfg.train_fraction + cfg.val_fraction)) -
                    n_train;
  std::vector<ctn::ManifestEntry> entries;
  for (int i = 0; i < cfg.phantom_count; ++i) {
    ctn::PhantomSpec spec = cfg.phantom;
    spec.seed = cfg.phantom.seed + static_cast<uint64_t>(i);
    auto [vol, mask] = ctn::generate_phantom(spec);
    char name[32];
    std::snprintf(name, sizeof(name), "phantom_%04d", i);
    const std::string base = (fs::path(cfg.out_dir) / name).string();
    ctn::write_volume(vol, &mask, base);
    const std::string split = i < n_train ? "train" : i < n_train + n_val ? "val" : "test";
    entries.push_back({base, base, split});
  }
  ctn::write_manifest(entries, (fs::path(cfg.out_dir) / "manifest.tsv").string());
  std::cout << "wrote " << entries.size() << " phantoms to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_train(const ctn::RunConfig& cfg, const std::string& resume) {
  require(!cfg.manifest.empty(), "train: data.manifest is required");
  require(!cfg.out_dir.empty(), "train: data.out_dir is required");
  ctn::write_frozen_config(cfg, cfg.out_dir);

  const auto manifest = ctn::read_manifest(cfg.manifest);
  Model m = build_model(cfg, cfg.train.seed);
  ctn::FitOptions opts;
  opts.out_dir = cfg.out_dir;
  opts.max_steps = cfg.max_steps;
  if (!resume.empty()) opts.resume = resume;
  const ctn::FitResult result = ctn::fit(*m.net, m.ps, manifest, cfg.train, opts);
  std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
  if (!result.best_checkpoint.empty())
    std::cout << "best checkpoint: " << result.best_checkpoint << " (val dice "
              << result.state.best_val_dice << " at epoch " << result.state.best_val_epoch
              << ")\n";
  return 0;
}

ctn::LabelMask predict_one(const ctn::Ctn& model, const ctn::Volume& vol,
                           std::array<int64_t, 3> input_size) {
  const ctn::Volume resized = ctn::resize_volume(vol, input_size);
  ctn::LabelMask pred = ctn::predict_labels(model, ctn::normalize_volume(resized));
  pred = ctn::resize_mask(pred, vol.shape);
  pred.spacing = vol.spacing;
  pred.origin = vol.origin;
  return pred;
}

struct EvalRow {
  std::string name;
  ctn::MetricsReport report;
};

void write_report(const std::vector<EvalRow>& rows, const std::string& out_dir,
                  const std::string& stem) {
  ctn::MetricsReport mean;
  for (const auto& r : rows) {
    mean.dice += r.report.dice;
    mean.dice_a += r.report.dice_a;
    mean.dice_c += r.report.dice_c;
    mean.assd_mm += r.report.assd_mm;
    mean.sp += r.report.sp;
    mean.sr += r.report.sr;
  }
  const double n = static_cast<double>(rows.size());
  mean.dice /= n;
  mean.dice_a /= n;
  mean.dice_c /= n;
  mean.assd_mm /= n;
  mean.sp /= n;
  mean.sr /= n;

  std::ofstream tsv(fs::path(out_dir) / (stem + ".tsv"));
  require(static_cast<bool>(tsv), "evaluate: cannot write report in " + out_dir);
  auto emit = [&](const std::string& name, const ctn::MetricsReport& r) {
    tsv << name << "\t" << r.dice << "\t" << r.dice_a << "\t" << r.dice_c << "\t" << r.assd_mm
        << "\t" << r.sp << "\t" << r.sr << "\n";
  };
  tsv << "volume\tDICE\tDICE_A\tDICE_C\tASSD_mm\tSP\tSR\n";
  for (const auto& r : rows) emit(r.name, r.report);
  emit("mean", mean);

  json summary;
  summary["mean"] = {{"dice", mean.dice},   {"dice_a", mean.dice_a}, {"dice_c", mean.dice_c},
                     {"assd_mm", mean.assd_mm}, {"sp", mean.sp},     {"sr", mean.sr}};
  json vols = json::array();
  for (const auto& r : rows)
    vols.push_back({{"volume", r.name},
                    {"dice", r.report.dice},
                    {"dice_a", r.report.dice_a},
                    {"dice_c", r.report.dice_c},
                    {"assd_mm", r.report.assd_mm},
                    {"sp", r.report.sp},
                    {"sr", r.report.sr}});
  summary["volumes"] = std::move(vols);
  std::ofstream js(fs::path(out_dir) / (stem + ".json"));
  js << summary.dump(2) << "\n";
}

std::vector<EvalRow> evaluate_entries(const ctn::RunConfig& cfg,
                                      const std::vector<ctn::ManifestEntry>& entries,
                                      const ctn::Ctn* model) {
  ctn::EvalOptions opt;
  opt.skeleton_coronary_only = cfg.skeleton_coronary_only;
  std::vector<EvalRow> rows;
  for (const auto& e : entries) {
    const ctn::LabelMask gt = ctn::read_label(e.label);
    ctn::LabelMask pred;
    const std::string name = fs::path(e.image).filename().string();
    if (!cfg.pred_dir.empty()) {
      pred = ctn::read_label((fs::path(cfg.pred_dir) / name).string());
    } else {
      auto [vol, label] = ctn::read_volume(e.image);
      pred = predict_one(*model, vol, cfg.model.input_size);
    }
    rows.push_back({name, ctn::evaluate(pred, gt, opt)});
  }
  return rows;
}

int cmd_evaluate(const ctn::RunConfig& cfg) {
  require(!cfg.manifest.empty(), "evaluate: data.manifest is required");
  require(!cfg.out_dir.empty(), "evaluate: data.out_dir is required");
  fs::create_directories(cfg.out_dir);
  ctn::write_frozen_config(cfg, cfg.out_dir);

  std::vector<ctn::ManifestEntry> test;
  for (const auto& e : ctn::read_manifest(cfg.manifest))
    if (e.split == "test") test.push_back(e);
  require(!test.empty(), "evaluate: manifest has no test entries");

  Model m;
  if (cfg.pred_dir.empty()) {
    require(!cfg.checkpoint.empty(),
            "evaluate: evaluate.checkpoint or evaluate.pred_dir is required");
    m = build_model(cfg, cfg.train.seed);
    auto [tensors, meta] = ctn::load_tensors(cfg.checkpoint);
    ctn::load_params(m.ps, tensors);
  }
  const auto rows = evaluate_entries(cfg, test, m.net.get());
  write_report(rows, cfg.out_dir, "report");
  std::cout << "evaluated " << rows.size() << " volumes; report in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_predict(const ctn::RunConfig& cfg) {
  require(!cfg.checkpoint.empty(), "predict: evaluate.checkpoint is required");
  require(!cfg.inputs.empty(), "predict: predict.inputs is required");
  require(!cfg.out_dir.empty(), "predict: data.out_dir is required");
  fs::create_directories(cfg.out_dir);
  ctn::write_frozen_config(cfg, cfg.out_dir);

  Model m = build_model(cfg, cfg.train.seed);
  auto [tensors, meta] = ctn::load_tensors(cfg.checkpoint);
  ctn::load_params(m.ps, tensors);

  for (const auto& input : cfg.inputs) {
    auto [vol, label] = ctn::read_volume(input);
    const ctn::LabelMask pred = predict_one(*m.net, vol, cfg.model.input_size);
    const std::string out = (fs::path(cfg.out_dir) / fs::path(input).filename()).string();
    ctn::write_label(pred, out);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_ablate(const ctn::RunConfig& base_cfg) {
  require(!base_cfg.manifest.empty(), "ablate: data.manifest is required");
  require(!base_cfg.out_dir.empty(), "ablate: data.out_dir is required");
  fs::create_directories(base_cfg.out_dir);
  ctn::write_frozen_config(base_cfg, base_cfg.out_dir);

  const auto manifest = ctn::read_manifest(base_cfg.manifest);
  std::vector<ctn::ManifestEntry> test;
  for (const auto& e : manifest)
    if (e.split == "test") test.push_back(e);
  require(!test.empty(), "ablate: manifest has no test entries");

  auto run_variant = [&](const std::string& name, ctn::RunConfig cfg) {
    cfg.pred_dir.clear();
    Model m = build_model(cfg, cfg.train.seed);
    if (cfg.max_steps != 0) {
      ctn::FitOptions opts;
      opts.out_dir = (fs::path(cfg.out_dir) / name).string();
      opts.max_steps = cfg.max_steps;
      ctn::fit(*m.net, m.ps, manifest, cfg.train, opts);
    }
    const auto rows = evaluate_entries(cfg, test, m.net.get());
    ctn::MetricsReport mean;
    for (const auto& r : rows) {
      mean.dice += r.report.dice;
      mean.dice_a += r.report.dice_a;
      mean.dice_c += r.report.dice_c;
      mean.assd_mm += r.report.assd_mm;
      mean.sp += r.report.sp;
      mean.sr += r.report.sr;
    }
    const double n = static_cast<double>(rows.size());
    mean.dice /= n;
    mean.dice_a /= n;
    mean.dice_c /= n;
    mean.assd_mm /= n;
    mean.sp /= n;
    mean.sr /= n;
    return mean;
  };

  auto emit = [](std::ofstream& tsv, const std::string& name, const ctn::MetricsReport& r) {
    tsv << name << "\t" << r.dice << "\t" << r.dice_a << "\t" << r.dice_c << "\t" << r.assd_mm
        << "\t" << r.sp << "\t" << r.sr << "\n";
  };
  const std::string header = "configuration\tDICE\tDICE_A\tDICE_C\tASSD_mm\tSP\tSR\n";

  // Fusion-stage grid: which encoder stages receive the transformer branch.
  const std::vector<std::pair<std::string, std::set<int>>> stage_grid = {
      {"none", {}},         {"stages_123", {1, 2, 3}},  {"stages_124", {1, 2, 4}},
      {"stages_134", {1, 3, 4}}, {"stages_234", {2, 3, 4}}, {"stages_1234", {1, 2, 3, 4}},
  };
  std::ofstream stages_tsv(fs::path(base_cfg.out_dir) / "ablation_stages.tsv");
  require(static_cast<bool>(stages_tsv), "ablate: cannot write in " + base_cfg.out_dir);
  stages_tsv << header;
  for (const auto& [name, stages] : stage_grid) {
    ctn::RunConfig cfg = base_cfg;
    cfg.model.fusion.enabled_stages = stages;
    emit(stages_tsv, name, run_variant("stage_" + name, cfg));
    std::cout << "ablation row done: " << name << "\n";
  }

  // Fusion-mode comparison: element-wise addition vs concatenation+conv.
  std::ofstream fusion_tsv(fs::path(base_cfg.out_dir) / "ablation_fusion.tsv");
  fusion_tsv << header;
  for (const auto mode : {ctn::FusionMode::add, ctn::FusionMode::concat}) {
    ctn::RunConfig cfg = base_cfg;
    cfg.model.fusion.mode = mode;
    cfg.model.fusion.enabled_stages = {1, 2, 3, 4};
    const std::string name = mode == ctn::FusionMode::add ? "add" : "concat";
    emit(fusion_tsv, name, run_variant("mode_" + name, cfg));
    std::cout << "ablation row done: " << name << "\n";
  }
  std::cout << "ablation tables in " << base_cfg.out_dir << "\n";
  return 0;
}

int fail(const std::string& category, const std::string& message, int code) {
  std::cerr << json{{"error", {{"category", category}, {"message", message}}}} << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D vessel segmentation: hybrid CNN/transformer training and evaluation"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, eval_opts, predict_opts, ablate_opts;
  std::string resume;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  add_common(gen, gen_opts);
  CLI::App* train = app.add_subcommand("train", "Train a model on a dataset manifest");
  add_common(train, train_opts);
  train->add_option("--resume", resume, "Checkpoint base path to resume from");
  CLI::App* eval = app.add_subcommand("evaluate", "Evaluate predictions or a checkpoint");
  add_common(eval, eval_opts);
  CLI::App* predict = app.add_subcommand("predict", "Write predicted label masks");
  add_common(predict, predict_opts);
  CLI::App* ablate = app.add_subcommand("ablate", "Run the fusion ablation grids");
  add_common(ablate, ablate_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(load(gen_opts));
    if (train->parsed()) return cmd_train(load(train_opts), resume);
    if (eval->parsed()) return cmd_evaluate(load(eval_opts));
    if (predict->parsed()) return cmd_predict(load(predict_opts));
    if (ablate->parsed()) return cmd_ablate(load(ablate_opts));
  } catch (const ctn::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("validation", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 4);
  }
  return fail("internal", "no subcommand dispatched", 5);
}
