#include "ctn/fusion.hpp"

#include <stdexcept>

namespace ctn {

void FusionConfig::validate() const {
  std::set<int> seen;
  for (int j : pairing) {
    if (j < 1 || j > 4) throw std::invalid_argument("fusion: pairing stages must be in 1..4");
    if (!seen.insert(j).second) throw std::invalid_argument("fusion: pairing must be injective");
  }
  for (int i : enabled_stages)
    if (i < 1 || i > 4) throw std::invalid_argument("fusion: enabled stages must be in 1..4");
}

void CtnConfig::validate() const {
  unet.validate();
  swin.validate();
  fusion.validate();
  for (int a = 0; a < 3; ++a) {
    if (input_size[a] % 16 != 0)
      throw std::invalid_argument("ctn: input size must be divisible by 16");
    if (input_size[a] % swin.patch_size[a] != 0)
      throw std::invalid_argument("ctn: input size must be divisible by the patch size");
  }
}

Var fuse_add(const Var& f_u, const Var& f_s_reshaped) {
  if (f_u->value.shape() != f_s_reshaped->value.shape())
    throw std::invalid_argument("fuse_add: shape mismatch");
  return ops::add(f_u, f_s_reshaped);
}

Var reshape_to(const Var& f_s, std::array<int64_t, 4> target_cdhw, const nn::Conv3d& proj) {
  Var resized = ops::trilinear_resize(f_s, {target_cdhw[1], target_cdhw[2], target_cdhw[3]});
  Var out = proj(resized);
  if (out->value.dim(1) != target_cdhw[0])
    throw std::invalid_argument("reshape_to: projection channel mismatch");
  return out;
}

Var fuse_concat(const Var& f_u, const Var& f_s_reshaped, const nn::Conv3d& conv) {
  const auto& a = f_u->value.shape();
  const auto& b = f_s_reshaped->value.shape();
  if (a.size() != 5 || b.size() != 5 || a[2] != b[2] || a[3] != b[3] || a[4] != b[4])
    throw std::invalid_argument("fuse_concat: spatial mismatch");
  return conv(ops::concat_channels(f_u, f_s_reshaped));
}

Ctn::Ctn(nn::ParamStore& ps, const CtnConfig& cfg, Rng& rng)
    : cfg_(cfg), unet_(ps, cfg.unet, rng, "unet"), swin_(ps, cfg.swin, rng, "swin") {
  cfg_.validate();
  for (int i = 1; i <= 4; ++i) {
    StageFusion& f = fusions_[i - 1];
    f.enabled = cfg_.fusion.enabled_stages.count(i) > 0;
    f.swin_stage = cfg_.fusion.pairing[i - 1];
    if (!f.enabled) continue;
    const int64_t cu = cfg_.unet.stage_channels[i - 1];
    const int64_t cs = cfg_.swin.stage_channels[f.swin_stage - 1];
    const std::string name = "fusion.stage" + std::to_string(i);
    f.proj = nn::Conv3d(ps, name + ".proj", cs, cu, 1, 1, 0, rng, /*bias=*/false);
    if (cfg_.fusion.mode == FusionMode::concat)
      f.cat_conv = nn::Conv3d(ps, name + ".cat", 2 * cu, cu, 3, 1, 1, rng);
  }
}

Var Ctn::forward(const Var& x) const {
  const auto& s = x->value.shape();
  if (s.size() != 5 || s[2] != cfg_.input_size[0] || s[3] != cfg_.input_size[1] ||
      s[4] != cfg_.input_size[2])
    throw std::invalid_argument("ctn: input does not match configured input_size");
  if (cfg_.fusion.enabled_stages.empty()) return unet_.forward(x);

  std::vector<Var> fs = swin_.forward(x);
  auto hook = [this, &fs](int stage, const Var& f_u) -> Var {
    const StageFusion& f = fusions_[stage - 1];
    if (!f.enabled) return f_u;
    const auto& us = f_u->value.shape();
    Var r = reshape_to(fs[f.swin_stage - 1], {us[1], us[2], us[3], us[4]}, f.proj);
    return cfg_.fusion.mode == FusionMode::add ? fuse_add(f_u, r)
                                               : fuse_concat(f_u, r, f.cat_conv);
  };
  auto enc = unet_.encode_hooked(x, hook);
  return unet_.decode(enc);
}

}  // namespace ctn
