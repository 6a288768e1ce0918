#include "ctn/swin3d.hpp"

#include <cmath>
#include <stdexcept>

namespace ctn {

namespace {

constexpr real kMaskedOut = -1e9;

std::vector<int64_t> grid_to_tokens_index(int64_t B, int64_t C, std::array<int64_t, 3> g) {
  const int64_t N = g[0] * g[1] * g[2];
  std::vector<int64_t> idx(static_cast<size_t>(B * N * C));
  int64_t o = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) idx[o++] = (b * C + c) * N + n;
  return idx;
}

std::vector<int64_t> tokens_to_grid_index(int64_t B, int64_t C, std::array<int64_t, 3> g) {
  const int64_t N = g[0] * g[1] * g[2];
  std::vector<int64_t> idx(static_cast<size_t>(B * C * N));
  int64_t o = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t n = 0; n < N; ++n) idx[o++] = (b * N + n) * C + c;
  return idx;
}

Var grid_to_tokens(const Var& x) {
  const auto& s = x->value.shape();
  const std::array<int64_t, 3> g{s[2], s[3], s[4]};
  return ops::gather(x, grid_to_tokens_index(s[0], s[1], g), {s[0], g[0] * g[1] * g[2], s[1]});
}

Var tokens_to_grid(const Var& x, std::array<int64_t, 3> g) {
  const auto& s = x->value.shape();  // [B, N, C]
  return ops::gather(x, tokens_to_grid_index(s[0], s[2], g), {s[0], s[2], g[0], g[1], g[2]});
}

}  // namespace

void SwinConfig::validate() const {
  for (int64_t p : patch_size)
    if (p < 1) throw std::invalid_argument("swin: bad patch size");
  for (int j = 1; j < 4; ++j)
    if (stage_channels[j] != 2 * stage_channels[j - 1])
      throw std::invalid_argument("swin: stage channels must double");
  for (int j = 0; j < 4; ++j) {
    if (stage_depths[j] % 2 != 0)
      throw std::invalid_argument("swin: stage depths must be even");
    if (stage_channels[j] % num_heads[j] != 0)
      throw std::invalid_argument("swin: channels must divide evenly over heads");
  }
  for (int64_t w : window_size)
    if (w < 1) throw std::invalid_argument("swin: bad window size");
}

WindowGeom WindowGeom::make(std::array<int64_t, 3> grid, std::array<int64_t, 3> window,
                            std::array<int64_t, 3> shift) {
  WindowGeom g;
  g.grid = grid;
  g.window = window;
  for (int a = 0; a < 3; ++a) {
    g.padded[a] = ((grid[a] + window[a] - 1) / window[a]) * window[a];
    // A single window along an axis makes shifting a no-op; drop it.
    g.shift[a] = (g.padded[a] == window[a]) ? 0 : shift[a] % window[a];
  }
  return g;
}

namespace {

// Source token coordinate (on the unpadded grid) feeding padded rolled
// position q along one axis; -1 when it falls in the zero padding.
inline int64_t source_coord(int64_t q, int64_t shift, int64_t padded, int64_t grid) {
  const int64_t o = (q + shift) % padded;
  return o < grid ? o : -1;
}

}  // namespace

std::vector<int64_t> window_partition_index(const WindowGeom& g, int64_t B, int64_t C) {
  const int64_t T = g.tokens_per_window();
  const int64_t nW = g.num_windows();
  const int64_t N = g.grid[0] * g.grid[1] * g.grid[2];
  const int64_t nwy = g.padded[1] / g.window[1];
  const int64_t nwx = g.padded[2] / g.window[2];
  std::vector<int64_t> idx(static_cast<size_t>(B * nW * T * C));
  int64_t o = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t wz = 0; wz < g.padded[0] / g.window[0]; ++wz)
      for (int64_t wy = 0; wy < nwy; ++wy)
        for (int64_t wx = 0; wx < nwx; ++wx)
          for (int64_t lz = 0; lz < g.window[0]; ++lz)
            for (int64_t ly = 0; ly < g.window[1]; ++ly)
              for (int64_t lx = 0; lx < g.window[2]; ++lx) {
                const int64_t oz =
                    source_coord(wz * g.window[0] + lz, g.shift[0], g.padded[0], g.grid[0]);
                const int64_t oy =
                    source_coord(wy * g.window[1] + ly, g.shift[1], g.padded[1], g.grid[1]);
                const int64_t ox =
                    source_coord(wx * g.window[2] + lx, g.shift[2], g.padded[2], g.grid[2]);
                const bool valid = oz >= 0 && oy >= 0 && ox >= 0;
                const int64_t n = valid ? (oz * g.grid[1] + oy) * g.grid[2] + ox : -1;
                for (int64_t c = 0; c < C; ++c)
                  idx[o++] = valid ? (b * N + n) * C + c : -1;
              }
  return idx;
}

std::vector<int64_t> window_unpartition_index(const WindowGeom& g, int64_t B, int64_t C) {
  const int64_t T = g.tokens_per_window();
  const int64_t nW = g.num_windows();
  const int64_t nwy = g.padded[1] / g.window[1];
  const int64_t nwx = g.padded[2] / g.window[2];
  std::vector<int64_t> idx(static_cast<size_t>(B * g.grid[0] * g.grid[1] * g.grid[2] * C));
  int64_t o = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oz = 0; oz < g.grid[0]; ++oz)
      for (int64_t oy = 0; oy < g.grid[1]; ++oy)
        for (int64_t ox = 0; ox < g.grid[2]; ++ox) {
          const int64_t qz = (oz - g.shift[0] + g.padded[0]) % g.padded[0];
          const int64_t qy = (oy - g.shift[1] + g.padded[1]) % g.padded[1];
          const int64_t qx = (ox - g.shift[2] + g.padded[2]) % g.padded[2];
          const int64_t w = (qz / g.window[0] * nwy + qy / g.window[1]) * nwx + qx / g.window[2];
          const int64_t t = (qz % g.window[0] * g.window[1] + qy % g.window[1]) * g.window[2] +
                            qx % g.window[2];
          for (int64_t c = 0; c < C; ++c)
            idx[o++] = ((b * nW + w) * T + t) * C + c;
        }
  return idx;
}

Tensor attention_mask(const WindowGeom& g) {
  if (!g.has_shift() && !g.has_padding()) return Tensor();
  const int64_t T = g.tokens_per_window();
  const int64_t nW = g.num_windows();
  std::vector<int64_t> region(static_cast<size_t>(nW * T));
  const int64_t nwy = g.padded[1] / g.window[1];
  const int64_t nwx = g.padded[2] / g.window[2];
  const int64_t by = g.padded[1] / g.window[1] + 2, bx = g.padded[2] / g.window[2] + 2;
  int64_t w = 0;
  for (int64_t wz = 0; wz < g.padded[0] / g.window[0]; ++wz)
    for (int64_t wy = 0; wy < nwy; ++wy)
      for (int64_t wx = 0; wx < nwx; ++wx, ++w) {
        int64_t t = 0;
        for (int64_t lz = 0; lz < g.window[0]; ++lz)
          for (int64_t ly = 0; ly < g.window[1]; ++ly)
            for (int64_t lx = 0; lx < g.window[2]; ++lx, ++t) {
              const int64_t oz =
                  source_coord(wz * g.window[0] + lz, g.shift[0], g.padded[0], g.grid[0]);
              const int64_t oy =
                  source_coord(wy * g.window[1] + ly, g.shift[1], g.padded[1], g.grid[1]);
              const int64_t ox =
                  source_coord(wx * g.window[2] + lx, g.shift[2], g.padded[2], g.grid[2]);
              if (oz < 0 || oy < 0 || ox < 0) {
                region[w * T + t] = -1;
              } else {
                // Block id of the shifted (non-cyclic) tiling on the real grid.
                const int64_t bz = (oz + g.shift[0]) / g.window[0];
                const int64_t byy = (oy + g.shift[1]) / g.window[1];
                const int64_t bxx = (ox + g.shift[2]) / g.window[2];
                region[w * T + t] = (bz * by + byy) * bx + bxx;
              }
            }
      }
  Tensor mask({nW, T, T});
  for (int64_t ww = 0; ww < nW; ++ww)
    for (int64_t a = 0; a < T; ++a)
      for (int64_t b = 0; b < T; ++b)
        mask[(ww * T + a) * T + b] =
            region[ww * T + a] == region[ww * T + b] ? 0.0 : kMaskedOut;
  return mask;
}

Var window_partition(const Var& tokens, const WindowGeom& g) {
  const auto& s = tokens->value.shape();  // [B, N, C]
  return ops::gather(tokens, window_partition_index(g, s[0], s[2]),
                     {s[0] * g.num_windows(), g.tokens_per_window(), s[2]});
}

Var window_unpartition(const Var& windows, const WindowGeom& g, int64_t B) {
  const int64_t C = windows->value.shape().back();
  return ops::gather(windows, window_unpartition_index(g, B, C),
                     {B, g.grid[0] * g.grid[1] * g.grid[2], C});
}

WindowAttention::WindowAttention(nn::ParamStore& ps, const std::string& name, int64_t dim,
                                 int64_t heads, std::array<int64_t, 3> window, bool qkv_bias,
                                 Rng& rng)
    : heads_(heads), dim_(dim) {
  qkv_ = nn::Linear(ps, name + ".qkv", dim, 3 * dim, rng, qkv_bias);
  proj_ = nn::Linear(ps, name + ".proj", dim, dim, rng, true);
  const int64_t wd = window[0], wh = window[1], ww = window[2];
  tokens_ = wd * wh * ww;
  const int64_t n_rel = (2 * wd - 1) * (2 * wh - 1) * (2 * ww - 1);
  rel_bias_table_ = ps.add(name + ".rel_bias", nn::randn_tensor({n_rel, heads}, 0.02, rng));
  bias_index_.resize(static_cast<size_t>(heads * tokens_ * tokens_));
  auto coord = [&](int64_t t) {
    return std::array<int64_t, 3>{t / (wh * ww), (t / ww) % wh, t % ww};
  };
  for (int64_t h = 0; h < heads; ++h)
    for (int64_t a = 0; a < tokens_; ++a)
      for (int64_t b = 0; b < tokens_; ++b) {
        const auto ca = coord(a), cb = coord(b);
        const int64_t flat = ((ca[0] - cb[0] + wd - 1) * (2 * wh - 1) + (ca[1] - cb[1] + wh - 1)) *
                                 (2 * ww - 1) +
                             (ca[2] - cb[2] + ww - 1);
        bias_index_[static_cast<size_t>((h * tokens_ + a) * tokens_ + b)] = flat * heads + h;
      }
}

Var WindowAttention::operator()(const Var& windows, const Tensor& mask) const {
  const auto& s = windows->value.shape();  // [G, T, C]
  const int64_t G = s[0], T = s[1], C = s[2];
  if (C != dim_ || T != tokens_) throw std::invalid_argument("window attention: shape mismatch");
  const int64_t H = heads_, hd = C / H;

  Var qkv = qkv_(windows);  // [G, T, 3C]
  std::vector<int64_t> qi(static_cast<size_t>(G * H * T * hd)), ki(qi.size()), vi(qi.size());
  int64_t o = 0;
  for (int64_t g = 0; g < G; ++g)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < hd; ++i, ++o) {
          const int64_t base = (g * T + t) * 3 * C + h * hd + i;
          qi[o] = base;
          ki[o] = base + C;
          vi[o] = base + 2 * C;
        }
  Var q = ops::scale(ops::gather(qkv, qi, {G, H, T, hd}), 1.0 / std::sqrt(static_cast<real>(hd)));
  Var k = ops::gather(qkv, ki, {G, H, T, hd});
  Var v = ops::gather(qkv, vi, {G, H, T, hd});

  Var scores = ops::matmul_bt(q, k);  // [G, H, T, T]
  Var bias = ops::gather(rel_bias_table_, bias_index_, {H, T, T});
  scores = ops::add_bias_windows(scores, bias);
  if (mask.numel()) scores = ops::add_mask(scores, mask);
  Var attn = ops::softmax_lastdim(scores);
  Var out = ops::matmul(attn, v);  // [G, H, T, hd]

  std::vector<int64_t> mi(static_cast<size_t>(G * T * C));
  o = 0;
  for (int64_t g = 0; g < G; ++g)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t i = 0; i < hd; ++i, ++o) mi[o] = ((g * H + h) * T + t) * hd + i;
  return proj_(ops::gather(out, mi, {G, T, C}));
}

Swin3d::Swin3d(nn::ParamStore& ps, const SwinConfig& cfg, Rng& rng, const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  embed_ = nn::Conv3d(ps, prefix + ".embed", 1, cfg_.stage_channels[0],
                      static_cast<int>(cfg_.patch_size[0]), static_cast<int>(cfg_.patch_size[0]),
                      0, rng);
  stages_.resize(4);
  for (int j = 0; j < 4; ++j) {
    const int64_t dim = cfg_.stage_channels[j];
    const int64_t hidden = static_cast<int64_t>(cfg_.mlp_ratio * dim);
    for (int64_t d = 0; d < cfg_.stage_depths[j]; ++d) {
      const std::string name =
          prefix + ".stage" + std::to_string(j + 1) + ".block" + std::to_string(d);
      Block b;
      b.ln1 = nn::LayerNorm(ps, name + ".ln1", dim);
      b.attn = WindowAttention(ps, name + ".attn", dim, cfg_.num_heads[j], cfg_.window_size,
                               cfg_.qkv_bias, rng);
      b.ln2 = nn::LayerNorm(ps, name + ".ln2", dim);
      b.fc1 = nn::Linear(ps, name + ".mlp.fc1", dim, hidden, rng);
      b.fc2 = nn::Linear(ps, name + ".mlp.fc2", hidden, dim, rng);
      b.shifted = (d % 2) == 1;
      stages_[j].push_back(std::move(b));
    }
    if (j < 3) {
      Merge m;
      m.ln = nn::LayerNorm(ps, prefix + ".merge" + std::to_string(j + 1) + ".ln", 8 * dim);
      m.reduce = nn::Linear(ps, prefix + ".merge" + std::to_string(j + 1) + ".reduce", 8 * dim,
                            2 * dim, rng, false);
      merges_.push_back(std::move(m));
    }
  }
}

Var Swin3d::patch_embed(const Var& x) const {
  const auto& s = x->value.shape();
  if (s.size() != 5) throw std::invalid_argument("swin: input must be [B,C,D,H,W]");
  for (int a = 0; a < 3; ++a)
    if (s[a + 2] % cfg_.patch_size[a] != 0)
      throw std::invalid_argument("swin: spatial dims must be divisible by patch size");
  return embed_(x);
}

Var Swin3d::run_block(const Block& blk, const Var& x, const Var& prev_input,
                      std::array<int64_t, 3> grid, Var* block_input_out) const {
  if (block_input_out) *block_input_out = x;
  std::array<int64_t, 3> shift{0, 0, 0};
  if (blk.shifted)
    for (int a = 0; a < 3; ++a) shift[a] = cfg_.window_size[a] / 2;
  const WindowGeom geom = WindowGeom::make(grid, cfg_.window_size, shift);
  const Tensor mask = attention_mask(geom);
  const int64_t B = x->value.dim(0);

  Var a = blk.ln1(x);
  Var w = window_partition(a, geom);
  Var att = blk.attn(w, mask);
  Var u = window_unpartition(att, geom, B);
  const Var& res = (cfg_.literal_shifted_residual && blk.shifted && prev_input) ? prev_input : x;
  Var y = ops::add(res, u);
  Var m = blk.fc2(ops::gelu(blk.fc1(blk.ln2(y))));
  return ops::add(y, m);
}

Var Swin3d::merge_tokens(const Merge& m, const Var& x, std::array<int64_t, 3>& grid, int64_t C,
                         int64_t B) const {
  const std::array<int64_t, 3> half{(grid[0] + 1) / 2, (grid[1] + 1) / 2, (grid[2] + 1) / 2};
  const int64_t N = grid[0] * grid[1] * grid[2];
  const int64_t N2 = half[0] * half[1] * half[2];
  std::vector<int64_t> idx(static_cast<size_t>(B * N2 * 8 * C));
  int64_t o = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oz = 0; oz < half[0]; ++oz)
      for (int64_t oy = 0; oy < half[1]; ++oy)
        for (int64_t ox = 0; ox < half[2]; ++ox)
          for (int64_t dz = 0; dz < 2; ++dz)
            for (int64_t dy = 0; dy < 2; ++dy)
              for (int64_t dx = 0; dx < 2; ++dx) {
                const int64_t sz = 2 * oz + dz, sy = 2 * oy + dy, sx = 2 * ox + dx;
                const bool valid = sz < grid[0] && sy < grid[1] && sx < grid[2];
                const int64_t n = (sz * grid[1] + sy) * grid[2] + sx;
                for (int64_t c = 0; c < C; ++c)
                  idx[o++] = valid ? (b * N + n) * C + c : -1;
              }
  Var gathered = ops::gather(x, idx, {B, N2, 8 * C});
  grid = half;
  return m.reduce(m.ln(gathered));
}

std::vector<Var> Swin3d::forward(const Var& x) const {
  Var emb = patch_embed(x);
  const auto& es = emb->value.shape();
  const int64_t B = es[0];
  std::array<int64_t, 3> grid{es[2], es[3], es[4]};
  Var tokens = grid_to_tokens(emb);

  std::vector<Var> features;
  for (int j = 0; j < 4; ++j) {
    Var prev_input;  // z^{l-1} for the literal shifted residual
    for (const auto& blk : stages_[j]) {
      Var this_input;
      tokens = run_block(blk, tokens, prev_input, grid, &this_input);
      prev_input = this_input;
    }
    features.push_back(tokens_to_grid(tokens, grid));
    if (j < 3) tokens = merge_tokens(merges_[j], tokens, grid, cfg_.stage_channels[j], B);
  }
  return features;
}

Var Swin3d::attention_block(const Var& grid_in, int stage, int block_in_stage,
                            bool shifted) const {
  const auto& s = grid_in->value.shape();
  std::array<int64_t, 3> grid{s[2], s[3], s[4]};
  Var tokens = grid_to_tokens(grid_in);
  Block blk = stages_.at(stage).at(block_in_stage);
  blk.shifted = shifted;
  Var out = run_block(blk, tokens, nullptr, grid, nullptr);
  return tokens_to_grid(out, grid);
}

}  // namespace ctn
