#pragma once

#include <set>

#include "ctn/swin3d.hpp"
#include "ctn/unet3d.hpp"

namespace ctn {

enum class FusionMode { add, concat };

struct FusionConfig {
  FusionMode mode = FusionMode::add;
  std::set<int> enabled_stages{1, 2, 3, 4};
  // pairing[i-1] = swin stage fused into unet stage i; diagonal by default.
  std::array<int, 4> pairing{1, 2, 3, 4};

  void validate() const;
};

struct CtnConfig {
  UnetConfig unet;
  SwinConfig swin;
  FusionConfig fusion;
  std::array<int64_t, 3> input_size{64, 64, 64};

  void validate() const;
};

/// Element-wise fusion (shapes must match exactly).
Var fuse_add(const Var& f_u, const Var& f_s_reshaped);

/// Trilinear resize to the target geometry followed by a bias-free 1x1x1
/// projection, so an all-zero transformer branch contributes exactly zero.
Var reshape_to(const Var& f_s, std::array<int64_t, 4> target_cdhw, const nn::Conv3d& proj);

/// Channel concatenation followed by a 3x3x3 convolution back to f_u's width.
Var fuse_concat(const Var& f_u, const Var& f_s_reshaped, const nn::Conv3d& conv);

/// The cross transformer network: U-Net backbone plus a parallel Swin branch
/// whose per-stage features are fused into the encoder path.
class Ctn {
 public:
  Ctn(nn::ParamStore& ps, const CtnConfig& cfg, Rng& rng);

  Var forward(const Var& x) const;

  const UNet3d& unet() const { return unet_; }
  const Swin3d& swin() const { return swin_; }
  const CtnConfig& config() const { return cfg_; }

 private:
  CtnConfig cfg_;
  UNet3d unet_;
  Swin3d swin_;
  struct StageFusion {
    bool enabled = false;
    int swin_stage = 0;  // 1-based
    nn::Conv3d proj;     // 1x1x1, bias-free
    nn::Conv3d cat_conv; // 3x3x3, concat mode only
  };
  std::array<StageFusion, 4> fusions_;
};

}  // namespace ctn
