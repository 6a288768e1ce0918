#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ctn/config.hpp"
#include "ctn/volio.hpp"

using namespace ctn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ctn_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CTN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kSmallPhantom =
    " --set phantom.grid_size=32 --set \"phantom.aorta_radius=[3,4]\""
    " --set \"phantom.coronary_radius=[1.0,1.5]\"";

}  // namespace

TEST_CASE("strict config parsing rejects unknown keys with the key named") {
  json doc = default_config_json();
  CHECK_NOTHROW(parse_config(doc));

  json bad = {{"train", {{"lr", 1e-3}}}};
  CHECK_THROWS_WITH(parse_config(bad), doctest::Contains("train.lr"));

  json bad2 = {{"modell", json::object()}};
  CHECK_THROWS_WITH(parse_config(bad2), doctest::Contains("modell"));
}

TEST_CASE("overrides reach nested keys and reject unknown ones") {
  json doc = default_config_json();
  apply_override(doc, "train.base_lr=0.5");
  CHECK(doc["train"]["base_lr"] == 0.5);
  apply_override(doc, "model.fusion.mode=concat");
  CHECK(doc["model"]["fusion"]["mode"] == "concat");
  apply_override(doc, "model.fusion.enabled_stages=[1,3]");
  RunConfig cfg = parse_config(doc);
  CHECK(cfg.model.fusion.mode == FusionMode::concat);
  CHECK(cfg.model.fusion.enabled_stages == std::set<int>{1, 3});
  CHECK_THROWS(apply_override(doc, "train.bogus=1"));
  CHECK_THROWS(apply_override(doc, "no_equals_sign"));
}

TEST_CASE("round trip through to_json preserves the configuration") {
  json doc = default_config_json();
  apply_override(doc, "model.fusion.mode=concat");
  apply_override(doc, "train.epochs=7");
  const RunConfig cfg = parse_config(doc);
  const RunConfig again = parse_config(to_json(cfg));
  CHECK(again.train.epochs == 7);
  CHECK(again.model.fusion.mode == FusionMode::concat);
}

TEST_CASE("gen-data writes the requested split counts and a frozen config") {
  TempDir tmp("gen");
  const std::string out = (tmp.path / "ds").string();
  const int rc = run_cli("gen-data --set phantom.count=10 --set phantom.train_fraction=0.8"
                         " --set phantom.val_fraction=0.1" +
                         kSmallPhantom + " --set data.out_dir=" + out);
  REQUIRE(rc == 0);

  const auto entries = read_manifest(out + "/manifest.tsv");
  REQUIRE(entries.size() == 10);
  int n_train = 0, n_val = 0, n_test = 0;
  for (const auto& e : entries) {
    n_train += e.split == "train";
    n_val += e.split == "val";
    n_test += e.split == "test";
  }
  CHECK(n_train == 8);
  CHECK(n_val == 1);
  CHECK(n_test == 1);

  // The frozen config reflects the overrides.
  std::ifstream frozen(out + "/resolved_config.json");
  REQUIRE(frozen.good());
  const json doc = json::parse(frozen);
  CHECK(doc["phantom"]["count"] == 10);
  CHECK(doc["phantom"]["grid_size"] == 32);
}

TEST_CASE("gen-data is deterministic: same config gives byte-identical volumes") {
  TempDir tmp("det");
  const std::string a = (tmp.path / "a").string(), b = (tmp.path / "b").string();
  const std::string common = "gen-data --set phantom.count=2 --set phantom.val_fraction=0" +
                             kSmallPhantom + " --set data.out_dir=";
  REQUIRE(run_cli(common + a) == 0);
  REQUIRE(run_cli(common + b) == 0);
  for (const std::string f : {"phantom_0000.raw", "phantom_0000.label.raw", "phantom_0001.raw"})
    CHECK(file_bytes(fs::path(a) / f) == file_bytes(fs::path(b) / f));
}

TEST_CASE("unknown config keys make the CLI fail with the config exit code") {
  CHECK(run_cli("train --set train.bogus_key=1") == 2);
  CHECK(run_cli("train --set train.epochs=abc") == 2);  // wrong type
}

TEST_CASE("missing inputs map to distinct error categories") {
  // No manifest: validation/runtime failure, not success and not a crash.
  const int rc = run_cli("train --set data.out_dir=/tmp/ctn_cli_nomanifest");
  CHECK(rc == 4);
  // Evaluate without checkpoint or predictions.
  TempDir tmp("eval");
  std::ofstream mf(tmp.path / "m.tsv");
  mf << "img\timg\ttest\n";
  mf.close();
  const int rc2 = run_cli("evaluate --set data.manifest=" + (tmp.path / "m.tsv").string() +
                          " --set data.out_dir=" + (tmp.path / "out").string());
  CHECK(rc2 == 4);
}

TEST_CASE("output root environment variable relocates relative out dirs") {
  CHECK(resolve_out_dir("/abs/path") == "/abs/path");
  setenv("CTN_OUTPUT_ROOT", "/tmp/ctn_root", 1);
  CHECK(resolve_out_dir("runs/x") == "/tmp/ctn_root/runs/x");
  CHECK(resolve_out_dir("/abs/path") == "/abs/path");
  unsetenv("CTN_OUTPUT_ROOT");
  CHECK(resolve_out_dir("runs/x") == "runs/x");
}
