#pragma once

#include <array>
#include <functional>
#include <string>

#include "ctn/nn.hpp"

namespace ctn {

enum class NormKind { instance, batch };
enum class Nonlinearity { relu, leaky_relu };

struct UnetConfig {
  int64_t in_channels = 1;
  int64_t num_classes = 3;
  std::array<int64_t, 4> stage_channels{32, 64, 128, 256};
  NormKind norm_kind = NormKind::instance;
  Nonlinearity nonlinearity = Nonlinearity::relu;

  void validate() const;
};

/// 3D U-Net backbone. A full-resolution stem block precedes four encoder
/// stages at strides /2../16; the decoder mirrors them with trilinear
/// upsampling and skip concatenation. Fusion taps attach to the four
/// downsampled stages only.
class UNet3d {
 public:
  struct EncodeResult {
    std::vector<Var> stages;  // 4 entries, stride /2../16
    Var bottleneck;           // stride /16
  };
  /// Returns the (possibly replaced) feature map for encoder stage i in 1..4.
  using StageHook = std::function<Var(int, const Var&)>;

  UNet3d(nn::ParamStore& ps, const UnetConfig& cfg, Rng& rng,
         const std::string& prefix = "unet");

  /// taps: empty, or 4 entries (null = no tap); each added to its stage output.
  EncodeResult encode(const Var& x, const std::vector<Var>& taps = {}) const;
  EncodeResult encode_hooked(const Var& x, const StageHook& hook) const;
  Var decode(const EncodeResult& enc) const;
  Var forward(const Var& x) const;

  const UnetConfig& config() const { return cfg_; }

 private:
  struct Norm {
    NormKind kind = NormKind::instance;
    Var gamma, beta;
    Var operator()(const Var& x) const;
  };
  struct Block {
    nn::Conv3d conv;
    Norm norm;
    Nonlinearity act = Nonlinearity::relu;
    Var operator()(const Var& x) const;
  };
  Block make_block(nn::ParamStore& ps, const std::string& name, int64_t in_ch, int64_t out_ch,
                   int stride, Rng& rng) const;

  UnetConfig cfg_;
  Block stem_;
  std::array<Block, 4> down_;
  std::array<Block, 4> stage_conv_;
  Block bottleneck_;
  std::array<Block, 3> dec_;  // at /8, /4, /2
  nn::Conv3d head_;           // full resolution, 3x3x3 to num_classes
};

}  // namespace ctn
