#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ctn/ops.hpp"
#include "ctn/rng.hpp"

namespace ctn::nn {

/// Flat registry of named trainable parameters; models register into one
/// store so the optimizer and checkpoints see a stable, ordered list.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
  Var find(const std::string& name) const;
  void zero_all();

 private:
  std::vector<std::pair<std::string, Var>> params_;
};

Tensor randn_tensor(std::vector<int64_t> shape, real stddev, Rng& rng);

struct Conv3d {
  Var w, b;
  int stride = 1, pad = 0;

  Conv3d() = default;
  Conv3d(ParamStore& ps, const std::string& name, int64_t in_ch, int64_t out_ch, int kernel,
         int stride, int pad, Rng& rng, bool bias = true);
  Var operator()(const Var& x) const { return ops::conv3d(x, w, b, stride, pad); }
};

struct Linear {
  Var w, b;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int64_t in_f, int64_t out_f, Rng& rng,
         bool bias = true);
  Var operator()(const Var& x) const { return ops::linear(x, w, b); }
};

struct LayerNorm {
  Var gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int64_t dim);
  Var operator()(const Var& x) const { return ops::layer_norm(x, gamma, beta); }
};

struct InstanceNorm3d {
  Var gamma, beta;

  InstanceNorm3d() = default;
  InstanceNorm3d(ParamStore& ps, const std::string& name, int64_t channels);
  Var operator()(const Var& x) const { return ops::instance_norm(x, gamma, beta); }
};

}  // namespace ctn::nn
