#pragma once

#include <array>
#include <string>
#include <vector>

#include "ctn/nn.hpp"

namespace ctn {

struct SwinConfig {
  std::array<int64_t, 3> patch_size{4, 4, 4};
  std::array<int64_t, 4> stage_channels{48, 96, 192, 384};
  std::array<int64_t, 4> stage_depths{2, 2, 6, 2};
  std::array<int64_t, 4> num_heads{3, 6, 12, 24};
  std::array<int64_t, 3> window_size{4, 4, 4};
  double mlp_ratio = 4.0;
  bool qkv_bias = true;
  // Reproduces the published recurrence literally, where the shifted block's
  // attention residual reuses the block input from two layers back.
  bool literal_shifted_residual = false;

  void validate() const;
};

/// Window tiling geometry for one stage: token grid, window, cyclic shift,
/// and the zero-padded grid the windows actually tile.
struct WindowGeom {
  std::array<int64_t, 3> grid;
  std::array<int64_t, 3> window;
  std::array<int64_t, 3> shift{0, 0, 0};
  std::array<int64_t, 3> padded;

  static WindowGeom make(std::array<int64_t, 3> grid, std::array<int64_t, 3> window,
                         std::array<int64_t, 3> shift);
  int64_t tokens_per_window() const { return window[0] * window[1] * window[2]; }
  int64_t num_windows() const {
    return (padded[0] / window[0]) * (padded[1] / window[1]) * (padded[2] / window[2]);
  }
  bool has_padding() const { return padded != grid; }
  bool has_shift() const { return shift != std::array<int64_t, 3>{0, 0, 0}; }
};

/// Token source index for [B*nW, T, C] from tokens [B, N, C]; -1 = zero pad.
/// Cyclic shift is folded into the map.
std::vector<int64_t> window_partition_index(const WindowGeom& g, int64_t B, int64_t C);
/// Inverse map, [B, N, C] from [B*nW, T, C] (pads dropped).
std::vector<int64_t> window_unpartition_index(const WindowGeom& g, int64_t B, int64_t C);
/// Additive attention mask [nW, T, T] with 0 for same pre-shift region and
/// -1e9 otherwise; empty tensor when no mask is needed.
Tensor attention_mask(const WindowGeom& g);

Var window_partition(const Var& tokens, const WindowGeom& g);
Var window_unpartition(const Var& windows, const WindowGeom& g, int64_t B);

class WindowAttention {
 public:
  WindowAttention() = default;
  WindowAttention(nn::ParamStore& ps, const std::string& name, int64_t dim, int64_t heads,
                  std::array<int64_t, 3> window, bool qkv_bias, Rng& rng);

  /// windows: [G, T, C]; mask: [nW, T, T] or empty.
  Var operator()(const Var& windows, const Tensor& mask) const;

 private:
  nn::Linear qkv_, proj_;
  Var rel_bias_table_;  // [(2wd-1)(2wh-1)(2ww-1), heads]
  std::vector<int64_t> bias_index_;  // [heads*T*T] into the flat table
  int64_t heads_ = 1, dim_ = 0, tokens_ = 0;
};

/// Tiny 3D Swin Transformer: patch embedding, four stages of alternating
/// W-MSA / SW-MSA blocks, patch merging between stages.
class Swin3d {
 public:
  Swin3d(nn::ParamStore& ps, const SwinConfig& cfg, Rng& rng,
         const std::string& prefix = "swin");

  /// x: [B,1,D,H,W] with spatial dims divisible by patch_size.
  /// Returns the four per-stage feature grids [B,C_j,d_j,h_j,w_j].
  std::vector<Var> forward(const Var& x) const;

  Var patch_embed(const Var& x) const;
  const SwinConfig& config() const { return cfg_; }

  /// Single attention block on a token grid [B,C,d,h,w] (exposed for tests).
  Var attention_block(const Var& grid, int stage, int block_in_stage, bool shifted) const;

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    WindowAttention attn;
    nn::Linear fc1, fc2;
    bool shifted = false;
  };
  struct Merge {
    nn::LayerNorm ln;
    nn::Linear reduce;
  };

  Var run_block(const Block& blk, const Var& x, const Var& prev_input,
                std::array<int64_t, 3> grid, Var* block_input_out) const;
  Var merge_tokens(const Merge& m, const Var& x, std::array<int64_t, 3>& grid, int64_t C,
                   int64_t B) const;

  SwinConfig cfg_;
  nn::Conv3d embed_;
  std::vector<std::vector<Block>> stages_;
  std::vector<Merge> merges_;
};

}  // namespace ctn
