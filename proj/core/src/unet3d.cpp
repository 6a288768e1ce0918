#include "ctn/unet3d.hpp"

#include <stdexcept>

namespace ctn {

void UnetConfig::validate() const {
  if (in_channels < 1 || num_classes < 2) throw std::invalid_argument("unet: bad channel config");
  for (size_t i = 1; i < stage_channels.size(); ++i)
    if (stage_channels[i] <= stage_channels[i - 1])
      throw std::invalid_argument("unet: stage_channels must be strictly increasing");
}

Var UNet3d::Norm::operator()(const Var& x) const {
  if (kind == NormKind::instance) return ops::instance_norm(x, gamma, beta);
  // Batch statistics with batch size 1 coincide with instance statistics;
  // training here always runs at batch 1 (see train module).
  return ops::instance_norm(x, gamma, beta);
}

Var UNet3d::Block::operator()(const Var& x) const {
  Var y = norm(conv(x));
  return act == Nonlinearity::relu ? ops::relu(y) : ops::leaky_relu(y, 0.01);
}

UNet3d::Block UNet3d::make_block(nn::ParamStore& ps, const std::string& name, int64_t in_ch,
                                 int64_t out_ch, int stride, Rng& rng) const {
  Block b;
  b.conv = nn::Conv3d(ps, name + ".conv", in_ch, out_ch, 3, stride, 1, rng);
  b.norm.kind = cfg_.norm_kind;
  b.norm.gamma = ps.add(name + ".norm.gamma", Tensor({out_ch}, 1.0));
  b.norm.beta = ps.add(name + ".norm.beta", Tensor({out_ch}));
  b.act = cfg_.nonlinearity;
  return b;
}

UNet3d::UNet3d(nn::ParamStore& ps, const UnetConfig& cfg, Rng& rng, const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const auto& sc = cfg_.stage_channels;
  stem_ = make_block(ps, prefix + ".stem", cfg_.in_channels, sc[0], 1, rng);
  int64_t prev = sc[0];
  for (int i = 0; i < 4; ++i) {
    down_[i] = make_block(ps, prefix + ".enc" + std::to_string(i + 1) + ".down", prev, sc[i], 2, rng);
    stage_conv_[i] =
        make_block(ps, prefix + ".enc" + std::to_string(i + 1) + ".conv", sc[i], sc[i], 1, rng);
    prev = sc[i];
  }
  bottleneck_ = make_block(ps, prefix + ".bottleneck", sc[3], sc[3], 1, rng);
  for (int i = 0; i < 3; ++i) {
    // decoder level i reconstructs stage (3-i): channels sc[2-i]
    const int64_t skip_ch = sc[2 - i];
    const int64_t in_ch = (i == 0 ? sc[3] : sc[3 - i]) + skip_ch;
    dec_[i] = make_block(ps, prefix + ".dec" + std::to_string(3 - i), in_ch, skip_ch, 1, rng);
  }
  head_ = nn::Conv3d(ps, prefix + ".head", sc[0], cfg_.num_classes, 3, 1, 1, rng);
}

UNet3d::EncodeResult UNet3d::encode_hooked(const Var& x, const StageHook& hook) const {
  const auto& s = x->value.shape();
  if (s.size() != 5) throw std::invalid_argument("unet: input must be [B,C,D,H,W]");
  for (int a = 2; a < 5; ++a)
    if (s[a] % 16 != 0)
      throw std::invalid_argument("unet: spatial dims must be divisible by 16");
  EncodeResult r;
  Var f = stem_(x);
  for (int i = 0; i < 4; ++i) {
    f = stage_conv_[i](down_[i](f));
    if (hook) f = hook(i + 1, f);
    r.stages.push_back(f);
  }
  r.bottleneck = bottleneck_(f);
  return r;
}

UNet3d::EncodeResult UNet3d::encode(const Var& x, const std::vector<Var>& taps) const {
  if (taps.empty()) return encode_hooked(x, nullptr);
  if (taps.size() != 4) throw std::invalid_argument("unet: taps must have 4 entries");
  return encode_hooked(x, [&taps](int stage, const Var& f) {
    const Var& t = taps[stage - 1];
    if (!t) return f;
    if (t->value.shape() != f->value.shape())
      throw std::invalid_argument("unet: tap shape mismatch at stage " + std::to_string(stage));
    return ops::add(f, t);
  });
}

Var UNet3d::decode(const EncodeResult& enc) const {
  if (enc.stages.size() != 4 || !enc.bottleneck)
    throw std::invalid_argument("unet: malformed encode result");
  Var d = enc.bottleneck;
  for (int i = 0; i < 3; ++i) {
    const Var& skip = enc.stages[2 - i];
    const auto& ss = skip->value.shape();
    Var up = ops::trilinear_resize(d, {ss[2], ss[3], ss[4]});
    d = dec_[i](ops::concat_channels(skip, up));
  }
  const auto& s1 = enc.stages[0]->value.shape();
  Var full = ops::trilinear_resize(d, {s1[2] * 2, s1[3] * 2, s1[4] * 2});
  return head_(full);
}

Var UNet3d::forward(const Var& x) const { return decode(encode(x)); }

}  // namespace ctn
