#include "ctn/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ctn::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
  for (const auto& [n, v] : params_)
    if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = make_leaf(std::move(init), true);
  params_.emplace_back(name, v);
  return v;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return v;
  return nullptr;
}

void ParamStore::zero_all() {
  for (auto& [n, v] : params_) v->value.fill(0.0);
}

Tensor randn_tensor(std::vector<int64_t> shape, real stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.normal();
  return t;
}

Conv3d::Conv3d(ParamStore& ps, const std::string& name, int64_t in_ch, int64_t out_ch,
               int kernel, int stride_, int pad_, Rng& rng, bool bias)
    : stride(stride_), pad(pad_) {
  const int64_t fan_in = in_ch * kernel * kernel * kernel;
  const real std = std::sqrt(2.0 / static_cast<real>(fan_in));
  w = ps.add(name + ".weight", randn_tensor({out_ch, in_ch, kernel, kernel, kernel}, std, rng));
  if (bias) b = ps.add(name + ".bias", Tensor({out_ch}));
}

Linear::Linear(ParamStore& ps, const std::string& name, int64_t in_f, int64_t out_f, Rng& rng,
               bool bias) {
  const real std = std::sqrt(1.0 / static_cast<real>(in_f));
  w = ps.add(name + ".weight", randn_tensor({out_f, in_f}, std, rng));
  if (bias) b = ps.add(name + ".bias", Tensor({out_f}));
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int64_t dim) {
  gamma = ps.add(name + ".gamma", Tensor({dim}, 1.0));
  beta = ps.add(name + ".beta", Tensor({dim}));
}

InstanceNorm3d::InstanceNorm3d(ParamStore& ps, const std::string& name, int64_t channels) {
  gamma = ps.add(name + ".gamma", Tensor({channels}, 1.0));
  beta = ps.add(name + ".beta", Tensor({channels}));
}

}  // namespace ctn::nn
