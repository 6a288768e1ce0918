#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctn/nn.hpp"
#include "ctn/tensor.hpp"

namespace ctn {

/// Ordered name -> tensor map, the unit of checkpoint serialization.
struct TensorMap {
  std::vector<std::pair<std::string, Tensor>> items;

  const Tensor* find(const std::string& name) const;
};

/// A checkpoint is `<base>.json` (names, shapes, byte offsets, metadata) next
/// to `<base>.bin` (the concatenated float64 payloads, little-endian).
void save_tensors(const TensorMap& tensors, const std::string& base_path,
                  const nlohmann::json& meta = nlohmann::json::object());
std::pair<TensorMap, nlohmann::json> load_tensors(const std::string& base_path);

TensorMap snapshot_params(const nn::ParamStore& ps);

/// Copy values into registered parameters; every parameter must be present
/// with a matching shape, and unknown names are rejected by name.
void load_params(nn::ParamStore& ps, const TensorMap& tensors);

}  // namespace ctn
