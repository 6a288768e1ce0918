#include "ctn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ctn {

namespace {

using nlohmann::json;

static_assert(sizeof(real) == 8, "checkpoint format stores float64 payloads");

void ensure_little_endian() {
  const uint32_t probe = 1;
  uint8_t first;
  std::memcpy(&first, &probe, 1);
  if (first != 1) throw std::runtime_error("checkpoint: big-endian hosts are not supported");
}

}  // namespace

const Tensor* TensorMap::find(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

void save_tensors(const TensorMap& tensors, const std::string& base_path, const json& meta) {
  ensure_little_endian();
  json manifest;
  manifest["format_version"] = 1;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  manifest["meta"] = meta;
  json entries = json::array();

  std::ofstream bin(base_path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot open for writing: " + base_path + ".bin");
  int64_t offset = 0;
  for (const auto& [name, t] : tensors.items) {
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset_bytes", offset},
                       {"numel", t.numel()}});
    bin.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(real)));
    offset += t.numel() * static_cast<int64_t>(sizeof(real));
  }
  if (!bin) throw std::runtime_error("checkpoint: write failed: " + base_path + ".bin");
  bin.close();
  manifest["tensors"] = std::move(entries);

  std::ofstream mf(base_path + ".json");
  if (!mf) throw std::runtime_error("checkpoint: cannot open for writing: " + base_path + ".json");
  mf << manifest.dump(2) << "\n";
}

std::pair<TensorMap, json> load_tensors(const std::string& base_path) {
  ensure_little_endian();
  std::ifstream mf(base_path + ".json");
  if (!mf) throw std::runtime_error("checkpoint: missing manifest: " + base_path + ".json");
  json manifest = json::parse(mf);
  if (manifest.value("dtype", "") != "float64")
    throw std::runtime_error("checkpoint: unsupported dtype in manifest");
  if (manifest.value("byte_order", "") != "little")
    throw std::runtime_error("checkpoint: unsupported byte order in manifest");

  std::ifstream bin(base_path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: missing payload: " + base_path + ".bin");
  bin.seekg(0, std::ios::end);
  const int64_t file_size = static_cast<int64_t>(bin.tellg());

  TensorMap out;
  for (const auto& e : manifest.at("tensors")) {
    const std::string name = e.at("name");
    const std::vector<int64_t> shape = e.at("shape");
    const int64_t offset = e.at("offset_bytes");
    const int64_t numel = e.at("numel");
    Tensor t = Tensor::zeros(shape);
    if (t.numel() != numel)
      throw std::runtime_error("checkpoint: shape/numel mismatch for tensor " + name);
    if (offset < 0 || offset + numel * static_cast<int64_t>(sizeof(real)) > file_size)
      throw std::runtime_error("checkpoint: payload range out of bounds for tensor " + name);
    bin.seekg(offset);
    bin.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(numel * sizeof(real)));
    if (!bin) throw std::runtime_error("checkpoint: short read for tensor " + name);
    out.items.emplace_back(name, std::move(t));
  }
  return {std::move(out), manifest.value("meta", json::object())};
}

TensorMap snapshot_params(const nn::ParamStore& ps) {
  TensorMap out;
  for (const auto& [name, v] : ps.params()) out.items.emplace_back(name, v->value);
  return out;
}

void load_params(nn::ParamStore& ps, const TensorMap& tensors) {
  for (const auto& [name, v] : ps.params()) {
    const Tensor* t = tensors.find(name);
    if (!t) throw std::runtime_error("checkpoint: missing parameter: " + name);
    if (t->shape() != v->value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for parameter: " + name);
    v->value = *t;
  }
}

}  // namespace ctn
