#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctn/fusion.hpp"
#include "ctn/phantom.hpp"
#include "ctn/train.hpp"

namespace ctn {

/// Configuration errors carry the offending key so callers can fail fast
/// with a precise message.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Everything a CLI run needs, mirroring the model/train/phantom structures
/// plus dataset and output plumbing.
struct RunConfig {
  CtnConfig model;
  TrainConfig train;
  int max_steps = -1;  // cap on optimizer steps (<0 = run the full schedule)

  PhantomSpec phantom;
  int phantom_count = 10;
  double train_fraction = 0.8;
  double val_fraction = 0.1;

  std::string manifest;    // dataset manifest path
  std::string out_dir;     // output directory
  std::string checkpoint;  // checkpoint base path (evaluate/predict)
  std::string pred_dir;    // evaluate: directory of predicted label files
  bool skeleton_coronary_only = false;
  std::vector<std::string> inputs;  // predict: volume base paths
};

/// The full schema with every default filled in.
nlohmann::json default_config_json();

/// Strict parse: every key must exist in the schema (unknown keys are
/// rejected by their dotted path), every value must have the schema's type.
RunConfig parse_config(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& cfg);

/// Apply one `section.key=value` override onto a config document. The value
/// text is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& spec);

/// Read a config file (or start from defaults when path is empty), apply
/// overrides, and parse strictly. When resolved_out is non-null it receives
/// the fully resolved document for freezing next to outputs.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                      nlohmann::json* resolved_out = nullptr);

/// Honors the output-root override environment variable (CTN_OUTPUT_ROOT)
/// for relative output directories.
std::string resolve_out_dir(const std::string& out_dir);

void write_frozen_config(const RunConfig& cfg, const std::string& out_dir);

}  // namespace ctn
