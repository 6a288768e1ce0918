#include "ctn/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace ctn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <size_t N, typename T>
json arr(const std::array<T, N>& a) {
  json out = json::array();
  for (const auto& v : a) out.push_back(v);
  return out;
}

template <size_t N, typename T>
void read_arr(const json& j, std::array<T, N>& out, const std::string& path) {
  if (!j.is_array() || j.size() != N)
    throw ConfigError("config: " + path + " must be an array of length " + std::to_string(N));
  for (size_t i = 0; i < N; ++i) out[i] = j[i].get<T>();
}

std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Same JSON kind, treating all numbers alike.
bool compatible(const json& schema, const json& value) {
  if (schema.is_number() && value.is_number()) return true;
  return schema.type() == value.type();
}

void merge_strict(json& base, const json& user, const std::string& prefix) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = join_key(prefix, it.key());
    if (!base.contains(it.key())) throw ConfigError("config: unknown key: " + path);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it.value().is_object())
        throw ConfigError("config: " + path + " must be an object");
      merge_strict(slot, it.value(), path);
    } else {
      if (!compatible(slot, it.value()))
        throw ConfigError("config: wrong type for key: " + path);
      slot = it.value();
    }
  }
}

}  // namespace

json default_config_json() {
  return to_json(RunConfig{});
}

json to_json(const RunConfig& cfg) {
  json j;
  j["model"] = {
      {"input_size", arr(cfg.model.input_size)},
      {"unet",
       {{"in_channels", cfg.model.unet.in_channels},
        {"num_classes", cfg.model.unet.num_classes},
        {"stage_channels", arr(cfg.model.unet.stage_channels)},
        {"norm", cfg.model.unet.norm_kind == NormKind::instance ? "instance" : "batch"},
        {"nonlinearity",
         cfg.model.unet.nonlinearity == Nonlinearity::relu ? "relu" : "leaky_relu"}}},
      {"swin",
       {{"patch_size", arr(cfg.model.swin.patch_size)},
        {"stage_channels", arr(cfg.model.swin.stage_channels)},
        {"stage_depths", arr(cfg.model.swin.stage_depths)},
        {"num_heads", arr(cfg.model.swin.num_heads)},
        {"window_size", arr(cfg.model.swin.window_size)},
        {"mlp_ratio", cfg.model.swin.mlp_ratio},
        {"qkv_bias", cfg.model.swin.qkv_bias},
        {"literal_shifted_residual", cfg.model.swin.literal_shifted_residual}}},
      {"fusion",
       {{"mode", cfg.model.fusion.mode == FusionMode::add ? "add" : "concat"},
        {"enabled_stages",
         std::vector<int>(cfg.model.fusion.enabled_stages.begin(),
                          cfg.model.fusion.enabled_stages.end())},
        {"pairing", arr(cfg.model.fusion.pairing)}}}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"base_lr", cfg.train.base_lr},
                {"lr_decay_factor", cfg.train.lr_decay_factor},
                {"lr_decay_every", cfg.train.lr_decay_every},
                {"weight_decay", cfg.train.weight_decay},
                {"first_moment_decay", cfg.train.first_moment_decay},
                {"second_moment_decay", cfg.train.second_moment_decay},
                {"adam_eps", cfg.train.adam_eps},
                {"batch_size", cfg.train.batch_size},
                {"seed", cfg.train.seed},
                {"dice_weight", cfg.train.dice_weight},
                {"ce_weight", cfg.train.ce_weight},
                {"flip_prob", arr(cfg.train.flip_prob)},
                {"max_steps", cfg.max_steps}};
  j["phantom"] = {{"seed", cfg.phantom.seed},
                  {"grid_size", cfg.phantom.grid_size},
                  {"aorta_radius",
                   json::array({cfg.phantom.aorta_radius_range.first,
                                cfg.phantom.aorta_radius_range.second})},
                  {"coronary_radius",
                   json::array({cfg.phantom.coronary_radius_range.first,
                                cfg.phantom.coronary_radius_range.second})},
                  {"branch_depth", cfg.phantom.branch_depth},
                  {"noise_sigma", cfg.phantom.noise_sigma},
                  {"foreground_intensity", cfg.phantom.foreground_intensity},
                  {"background_intensity", cfg.phantom.background_intensity},
                  {"count", cfg.phantom_count},
                  {"train_fraction", cfg.train_fraction},
                  {"val_fraction", cfg.val_fraction}};
  j["data"] = {{"manifest", cfg.manifest}, {"out_dir", cfg.out_dir}};
  j["evaluate"] = {{"checkpoint", cfg.checkpoint},
                   {"pred_dir", cfg.pred_dir},
                   {"skeleton_coronary_only", cfg.skeleton_coronary_only}};
  j["predict"] = {{"inputs", cfg.inputs}};
  return j;
}

RunConfig parse_config(const json& user) {
  json doc = default_config_json();
  merge_strict(doc, user, "");

  RunConfig cfg;
  const json& m = doc["model"];
  read_arr(m["input_size"], cfg.model.input_size, "model.input_size");
  const json& u = m["unet"];
  cfg.model.unet.in_channels = u["in_channels"];
  cfg.model.unet.num_classes = u["num_classes"];
  read_arr(u["stage_channels"], cfg.model.unet.stage_channels, "model.unet.stage_channels");
  const std::string norm = u["norm"];
  if (norm == "instance")
    cfg.model.unet.norm_kind = NormKind::instance;
  else if (norm == "batch")
    cfg.model.unet.norm_kind = NormKind::batch;
  else
    throw ConfigError("config: model.unet.norm must be 'instance' or 'batch'");
  const std::string act = u["nonlinearity"];
  if (act == "relu")
    cfg.model.unet.nonlinearity = Nonlinearity::relu;
  else if (act == "leaky_relu")
    cfg.model.unet.nonlinearity = Nonlinearity::leaky_relu;
  else
    throw ConfigError("config: model.unet.nonlinearity must be 'relu' or 'leaky_relu'");

  const json& s = m["swin"];
  read_arr(s["patch_size"], cfg.model.swin.patch_size, "model.swin.patch_size");
  read_arr(s["stage_channels"], cfg.model.swin.stage_channels, "model.swin.stage_channels");
  read_arr(s["stage_depths"], cfg.model.swin.stage_depths, "model.swin.stage_depths");
  read_arr(s["num_heads"], cfg.model.swin.num_heads, "model.swin.num_heads");
  read_arr(s["window_size"], cfg.model.swin.window_size, "model.swin.window_size");
  cfg.model.swin.mlp_ratio = s["mlp_ratio"];
  cfg.model.swin.qkv_bias = s["qkv_bias"];
  cfg.model.swin.literal_shifted_residual = s["literal_shifted_residual"];

  const json& f = m["fusion"];
  const std::string mode = f["mode"];
  if (mode == "add")
    cfg.model.fusion.mode = FusionMode::add;
  else if (mode == "concat")
    cfg.model.fusion.mode = FusionMode::concat;
  else
    throw ConfigError("config: model.fusion.mode must be 'add' or 'concat'");
  cfg.model.fusion.enabled_stages.clear();
  for (const auto& v : f["enabled_stages"]) cfg.model.fusion.enabled_stages.insert(v.get<int>());
  read_arr(f["pairing"], cfg.model.fusion.pairing, "model.fusion.pairing");

  const json& t = doc["train"];
  cfg.train.epochs = t["epochs"];
  cfg.train.base_lr = t["base_lr"];
  cfg.train.lr_decay_factor = t["lr_decay_factor"];
  cfg.train.lr_decay_every = t["lr_decay_every"];
  cfg.train.weight_decay = t["weight_decay"];
  cfg.train.first_moment_decay = t["first_moment_decay"];
  cfg.train.second_moment_decay = t["second_moment_decay"];
  cfg.train.adam_eps = t["adam_eps"];
  cfg.train.batch_size = t["batch_size"];
  cfg.train.seed = t["seed"];
  cfg.train.dice_weight = t["dice_weight"];
  cfg.train.ce_weight = t["ce_weight"];
  read_arr(t["flip_prob"], cfg.train.flip_prob, "train.flip_prob");
  cfg.max_steps = t["max_steps"];

  const json& p = doc["phantom"];
  cfg.phantom.seed = p["seed"];
  cfg.phantom.grid_size = p["grid_size"];
  std::array<double, 2> r{};
  read_arr(p["aorta_radius"], r, "phantom.aorta_radius");
  cfg.phantom.aorta_radius_range = {r[0], r[1]};
  read_arr(p["coronary_radius"], r, "phantom.coronary_radius");
  cfg.phantom.coronary_radius_range = {r[0], r[1]};
  cfg.phantom.branch_depth = p["branch_depth"];
  cfg.phantom.noise_sigma = p["noise_sigma"];
  cfg.phantom.foreground_intensity = p["foreground_intensity"];
  cfg.phantom.background_intensity = p["background_intensity"];
  cfg.phantom_count = p["count"];
  cfg.train_fraction = p["train_fraction"];
  cfg.val_fraction = p["val_fraction"];
  if (cfg.phantom_count < 0) throw ConfigError("config: phantom.count must be >= 0");
  if (cfg.train_fraction < 0 || cfg.val_fraction < 0 ||
      cfg.train_fraction + cfg.val_fraction > 1.0)
    throw ConfigError("config: phantom split fractions must be >= 0 and sum to <= 1");

  cfg.manifest = doc["data"]["manifest"];
  cfg.out_dir = doc["data"]["out_dir"];
  cfg.checkpoint = doc["evaluate"]["checkpoint"];
  cfg.pred_dir = doc["evaluate"]["pred_dir"];
  cfg.skeleton_coronary_only = doc["evaluate"]["skeleton_coronary_only"];
  cfg.inputs = doc["predict"]["inputs"].get<std::vector<std::string>>();
  return cfg;
}

void apply_override(json& doc, const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override must look like section.key=value: " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);

  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;  // bare strings need no quoting

  json patch;
  json* slot = &patch;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("config: empty key segment in override: " + spec);
    if (dot == std::string::npos) {
      (*slot)[key] = value;
      break;
    }
    slot = &(*slot)[key];
    start = dot + 1;
  }
  merge_strict(doc, patch, "");
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                      json* resolved_out) {
  json doc = default_config_json();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read file: " + path);
    json user = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (user.is_discarded()) throw ConfigError("config: malformed JSON in " + path);
    merge_strict(doc, user, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig cfg = parse_config(doc);
  if (resolved_out) *resolved_out = to_json(cfg);
  return cfg;
}

std::string resolve_out_dir(const std::string& out_dir) {
  const char* root = std::getenv("CTN_OUTPUT_ROOT");
  if (root && *root && !out_dir.empty() && fs::path(out_dir).is_relative())
    return (fs::path(root) / out_dir).string();
  return out_dir;
}

void write_frozen_config(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "resolved_config.json");
  if (!out) throw std::runtime_error("config: cannot write resolved config in " + out_dir);
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace ctn
