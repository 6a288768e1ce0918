#include "ctn/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace ctn::ops {

namespace {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

void check_same_shape(const Var& a, const Var& b, const char* what) {
  if (a->value.shape() != b->value.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const int64_t n = self.value.numel();
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const int64_t n = self.value.numel();
    if (self.parents[0]->requires_grad)
      for (int64_t i = 0; i < n; ++i) self.parents[0]->grad[i] += self.grad[i];
    if (self.parents[1]->requires_grad)
      for (int64_t i = 0; i < n; ++i) self.parents[1]->grad[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const int64_t n = self.value.numel();
    auto& a = self.parents[0];
    auto& b = self.parents[1];
    if (a->requires_grad)
      for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * b->value[i];
    if (b->requires_grad)
      for (int64_t i = 0; i < n; ++i) b->grad[i] += self.grad[i] * a->value[i];
  });
}

Var scale(const Var& a, real s) {
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * s;
  return make_node(std::move(out), {a}, [s](Node& self) {
    const int64_t n = self.value.numel();
    for (int64_t i = 0; i < n; ++i) self.parents[0]->grad[i] += self.grad[i] * s;
  });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var leaky_relu(const Var& a, real slope) {
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const real x = a->value[i];
    out[i] = x > 0 ? x : slope * x;
  }
  return make_node(std::move(out), {a}, [slope](Node& self) {
    const int64_t n = self.value.numel();
    auto& p = self.parents[0];
    for (int64_t i = 0; i < n; ++i)
      p->grad[i] += self.grad[i] * (p->value[i] > 0 ? 1.0 : slope);
  });
}

Var gelu(const Var& a) {
  static const real inv_sqrt2 = 1.0 / std::sqrt(2.0);
  static const real inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const real x = a->value[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  return make_node(std::move(out), {a}, [](Node& self) {
    const int64_t n = self.value.numel();
    auto& p = self.parents[0];
    for (int64_t i = 0; i < n; ++i) {
      const real x = p->value[i];
      const real cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      const real pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      p->grad[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const int64_t out_f = w->value.dim(0);
  const int64_t in_f = w->value.dim(1);
  if (x->value.numel() % in_f != 0)
    throw std::invalid_argument("linear: input numel not divisible by in_features");
  const int64_t rows = x->value.numel() / in_f;
  if (b && b->value.numel() != out_f) throw std::invalid_argument("linear: bias size mismatch");

  std::vector<int64_t> out_shape = x->value.shape();
  out_shape.back() = out_f;
  Tensor out(out_shape);
  {
    MapC X(x->value.data(), rows, in_f);
    MapC W(w->value.data(), out_f, in_f);
    MapM Y(out.data(), rows, out_f);
    Y.noalias() = X * W.transpose();
    if (b)
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < out_f; ++c) out[r * out_f + c] += b->value[c];
  }
  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(out), std::move(parents), [rows, in_f, out_f](Node& self) {
    auto& x = self.parents[0];
    auto& w = self.parents[1];
    MapC dY(self.grad.data(), rows, out_f);
    if (x->requires_grad) {
      MapM dX(x->grad.data(), rows, in_f);
      MapC W(w->value.data(), out_f, in_f);
      dX.noalias() += dY * W;
    }
    if (w->requires_grad) {
      MapM dW(w->grad.data(), out_f, in_f);
      MapC X(x->value.data(), rows, in_f);
      dW.noalias() += dY.transpose() * X;
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& b = self.parents[2];
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < out_f; ++c) b->grad[c] += self.grad[r * out_f + c];
    }
  });
}

namespace {

Var matmul_impl(const Var& a, const Var& b, bool b_transposed) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa.size() < 2 || sb.size() != sa.size())
    throw std::invalid_argument("matmul: rank mismatch");
  int64_t batch = 1;
  for (size_t i = 0; i + 2 < sa.size(); ++i) {
    if (sa[i] != sb[i]) throw std::invalid_argument("matmul: batch dims mismatch");
    batch *= sa[i];
  }
  const int64_t M = sa[sa.size() - 2];
  const int64_t K = sa[sa.size() - 1];
  const int64_t N = b_transposed ? sb[sb.size() - 2] : sb[sb.size() - 1];
  const int64_t bK = b_transposed ? sb[sb.size() - 1] : sb[sb.size() - 2];
  if (bK != K) throw std::invalid_argument("matmul: inner dims mismatch");

  std::vector<int64_t> out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(M);
  out_shape.push_back(N);
  Tensor out(out_shape);
  for (int64_t g = 0; g < batch; ++g) {
    MapC A(a->value.data() + g * M * K, M, K);
    MapM Y(out.data() + g * M * N, M, N);
    if (b_transposed) {
      MapC B(b->value.data() + g * N * K, N, K);
      Y.noalias() = A * B.transpose();
    } else {
      MapC B(b->value.data() + g * K * N, K, N);
      Y.noalias() = A * B;
    }
  }
  return make_node(std::move(out), {a, b}, [batch, M, K, N, b_transposed](Node& self) {
    auto& a = self.parents[0];
    auto& b = self.parents[1];
    for (int64_t g = 0; g < batch; ++g) {
      MapC dY(self.grad.data() + g * M * N, M, N);
      MapC A(a->value.data() + g * M * K, M, K);
      if (b_transposed) {
        MapC B(b->value.data() + g * N * K, N, K);
        if (a->requires_grad) {
          MapM dA(a->grad.data() + g * M * K, M, K);
          dA.noalias() += dY * B;
        }
        if (b->requires_grad) {
          MapM dB(b->grad.data() + g * N * K, N, K);
          dB.noalias() += dY.transpose() * A;
        }
      } else {
        MapC B(b->value.data() + g * K * N, K, N);
        if (a->requires_grad) {
          MapM dA(a->grad.data() + g * M * K, M, K);
          dA.noalias() += dY * B.transpose();
        }
        if (b->requires_grad) {
          MapM dB(b->grad.data() + g * K * N, K, N);
          dB.noalias() += A.transpose() * dY;
        }
      }
    }
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) { return matmul_impl(a, b, false); }
Var matmul_bt(const Var& a, const Var& b) { return matmul_impl(a, b, true); }

Var softmax_lastdim(const Var& x) {
  const int64_t C = x->value.shape().back();
  const int64_t rows = x->value.numel() / C;
  Tensor out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = x->value.data() + r * C;
    real* yr = out.data() + r * C;
    real m = xr[0];
    for (int64_t c = 1; c < C; ++c) m = std::max(m, xr[c]);
    real s = 0;
    for (int64_t c = 0; c < C; ++c) {
      yr[c] = std::exp(xr[c] - m);
      s += yr[c];
    }
    const real inv = 1.0 / s;
    for (int64_t c = 0; c < C; ++c) yr[c] *= inv;
  }
  return make_node(std::move(out), {x}, [rows, C](Node& self) {
    auto& p = self.parents[0];
    for (int64_t r = 0; r < rows; ++r) {
      const real* y = self.value.data() + r * C;
      const real* dy = self.grad.data() + r * C;
      real dot = 0;
      for (int64_t c = 0; c < C; ++c) dot += dy[c] * y[c];
      real* dx = p->grad.data() + r * C;
      for (int64_t c = 0; c < C; ++c) dx[c] += y[c] * (dy[c] - dot);
    }
  });
}

Var add_bias_windows(const Var& scores, const Var& bias) {
  const auto& ss = scores->value.shape();
  if (ss.size() != 4 || bias->value.shape().size() != 3)
    throw std::invalid_argument("add_bias_windows: rank mismatch");
  const int64_t W = ss[0];
  const int64_t inner = bias->value.numel();
  if (scores->value.numel() != W * inner)
    throw std::invalid_argument("add_bias_windows: size mismatch");
  Tensor out(ss);
  for (int64_t w = 0; w < W; ++w)
    for (int64_t i = 0; i < inner; ++i)
      out[w * inner + i] = scores->value[w * inner + i] + bias->value[i];
  return make_node(std::move(out), {scores, bias}, [W, inner](Node& self) {
    auto& s = self.parents[0];
    auto& b = self.parents[1];
    if (s->requires_grad)
      for (int64_t i = 0; i < self.grad.numel(); ++i) s->grad[i] += self.grad[i];
    if (b->requires_grad)
      for (int64_t w = 0; w < W; ++w)
        for (int64_t i = 0; i < inner; ++i) b->grad[i] += self.grad[w * inner + i];
  });
}

Var add_mask(const Var& scores, const Tensor& mask) {
  const auto& ss = scores->value.shape();
  if (ss.size() != 4 || mask.shape().size() != 3)
    throw std::invalid_argument("add_mask: rank mismatch");
  const int64_t nw = mask.dim(0);
  const int64_t H = ss[1];
  const int64_t tt = ss[2] * ss[3];
  if (ss[0] % nw != 0 || mask.numel() != nw * tt)
    throw std::invalid_argument("add_mask: size mismatch");
  Tensor out(ss);
  for (int64_t w = 0; w < ss[0]; ++w) {
    const real* mw = mask.data() + (w % nw) * tt;
    for (int64_t h = 0; h < H; ++h) {
      const int64_t base = (w * H + h) * tt;
      for (int64_t i = 0; i < tt; ++i) out[base + i] = scores->value[base + i] + mw[i];
    }
  }
  return make_node(std::move(out), {scores}, [](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) self.parents[0]->grad[i] += self.grad[i];
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, real eps) {
  const int64_t C = gamma->value.numel();
  if (beta->value.numel() != C) throw std::invalid_argument("layer_norm: affine size mismatch");
  if (x->value.numel() % C != 0) throw std::invalid_argument("layer_norm: size mismatch");
  const int64_t rows = x->value.numel() / C;
  Tensor out(x->value.shape());
  auto invstd = std::make_shared<std::vector<real>>(rows);
  auto means = std::make_shared<std::vector<real>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = x->value.data() + r * C;
    real m = 0;
    for (int64_t c = 0; c < C; ++c) m += xr[c];
    m /= C;
    real v = 0;
    for (int64_t c = 0; c < C; ++c) v += (xr[c] - m) * (xr[c] - m);
    v /= C;
    const real is = 1.0 / std::sqrt(v + eps);
    (*means)[r] = m;
    (*invstd)[r] = is;
    real* yr = out.data() + r * C;
    for (int64_t c = 0; c < C; ++c)
      yr[c] = (xr[c] - m) * is * gamma->value[c] + beta->value[c];
  }
  return make_node(std::move(out), {x, gamma, beta}, [rows, C, means, invstd](Node& self) {
    auto& x = self.parents[0];
    auto& gamma = self.parents[1];
    auto& beta = self.parents[2];
    std::vector<real> xhat(C), dxhat(C);
    for (int64_t r = 0; r < rows; ++r) {
      const real* xr = x->value.data() + r * C;
      const real* dy = self.grad.data() + r * C;
      const real m = (*means)[r];
      const real is = (*invstd)[r];
      real s1 = 0, s2 = 0;
      for (int64_t c = 0; c < C; ++c) {
        xhat[c] = (xr[c] - m) * is;
        dxhat[c] = dy[c] * gamma->value[c];
        s1 += dxhat[c];
        s2 += dxhat[c] * xhat[c];
      }
      if (x->requires_grad) {
        real* dx = x->grad.data() + r * C;
        for (int64_t c = 0; c < C; ++c)
          dx[c] += is * (dxhat[c] - s1 / C - xhat[c] * s2 / C);
      }
      if (gamma->requires_grad)
        for (int64_t c = 0; c < C; ++c) gamma->grad[c] += dy[c] * xhat[c];
      if (beta->requires_grad)
        for (int64_t c = 0; c < C; ++c) beta->grad[c] += dy[c];
    }
  });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, real eps) {
  const auto& s = x->value.shape();
  if (s.size() != 5) throw std::invalid_argument("instance_norm: expects rank-5 input");
  const int64_t B = s[0], C = s[1];
  const int64_t S = s[2] * s[3] * s[4];
  if (gamma->value.numel() != C || beta->value.numel() != C)
    throw std::invalid_argument("instance_norm: affine size mismatch");
  Tensor out(s);
  auto means = std::make_shared<std::vector<real>>(B * C);
  auto invstd = std::make_shared<std::vector<real>>(B * C);
  for (int64_t g = 0; g < B * C; ++g) {
    const real* xg = x->value.data() + g * S;
    real m = 0;
    for (int64_t i = 0; i < S; ++i) m += xg[i];
    m /= S;
    real v = 0;
    for (int64_t i = 0; i < S; ++i) v += (xg[i] - m) * (xg[i] - m);
    v /= S;
    const real is = 1.0 / std::sqrt(v + eps);
    (*means)[g] = m;
    (*invstd)[g] = is;
    const int64_t c = g % C;
    real* yg = out.data() + g * S;
    for (int64_t i = 0; i < S; ++i)
      yg[i] = (xg[i] - m) * is * gamma->value[c] + beta->value[c];
  }
  return make_node(std::move(out), {x, gamma, beta}, [B, C, S, means, invstd](Node& self) {
    auto& x = self.parents[0];
    auto& gamma = self.parents[1];
    auto& beta = self.parents[2];
    for (int64_t g = 0; g < B * C; ++g) {
      const int64_t c = g % C;
      const real* xg = x->value.data() + g * S;
      const real* dy = self.grad.data() + g * S;
      const real m = (*means)[g];
      const real is = (*invstd)[g];
      const real gm = gamma->value[c];
      real s1 = 0, s2 = 0;
      for (int64_t i = 0; i < S; ++i) {
        const real xh = (xg[i] - m) * is;
        s1 += dy[i];
        s2 += dy[i] * xh;
      }
      if (x->requires_grad) {
        real* dx = x->grad.data() + g * S;
        for (int64_t i = 0; i < S; ++i) {
          const real xh = (xg[i] - m) * is;
          dx[i] += gm * is * (dy[i] - s1 / S - xh * s2 / S);
        }
      }
      if (gamma->requires_grad) {
        real acc = 0;
        for (int64_t i = 0; i < S; ++i) acc += dy[i] * (xg[i] - m) * is;
        gamma->grad[c] += acc;
      }
      if (beta->requires_grad) beta->grad[c] += s1;
    }
  });
}

namespace {

struct ConvGeom {
  int64_t B, Ci, D, H, W, Co, kd, kh, kw, OD, OH, OW;
  int stride, pad;
};

// Gathers one output-depth slice of receptive fields into col [Ci*kd*kh*kw, OH*OW].
void im2col_slice(const real* x, const ConvGeom& g, int64_t b, int64_t od, real* col) {
  const int64_t K = g.Ci * g.kd * g.kh * g.kw;
  const int64_t cols = g.OH * g.OW;
  const real* xb = x + b * g.Ci * g.D * g.H * g.W;
  for (int64_t ci = 0; ci < g.Ci; ++ci) {
    for (int64_t zk = 0; zk < g.kd; ++zk) {
      const int64_t z = od * g.stride - g.pad + zk;
      for (int64_t yk = 0; yk < g.kh; ++yk) {
        for (int64_t xk = 0; xk < g.kw; ++xk) {
          const int64_t krow = ((ci * g.kd + zk) * g.kh + yk) * g.kw + xk;
          real* crow = col + krow * cols;
          if (z < 0 || z >= g.D) {
            for (int64_t i = 0; i < cols; ++i) crow[i] = 0;
            continue;
          }
          for (int64_t oy = 0; oy < g.OH; ++oy) {
            const int64_t y = oy * g.stride - g.pad + yk;
            real* cptr = crow + oy * g.OW;
            if (y < 0 || y >= g.H) {
              for (int64_t i = 0; i < g.OW; ++i) cptr[i] = 0;
              continue;
            }
            const real* xrow = xb + ((ci * g.D + z) * g.H + y) * g.W;
            for (int64_t ox = 0; ox < g.OW; ++ox) {
              const int64_t xx = ox * g.stride - g.pad + xk;
              cptr[ox] = (xx < 0 || xx >= g.W) ? 0 : xrow[xx];
            }
          }
        }
      }
    }
  }
  (void)K;
}

void col2im_slice_add(const real* col, const ConvGeom& g, int64_t b, int64_t od, real* dx) {
  const int64_t cols = g.OH * g.OW;
  real* xb = dx + b * g.Ci * g.D * g.H * g.W;
  for (int64_t ci = 0; ci < g.Ci; ++ci) {
    for (int64_t zk = 0; zk < g.kd; ++zk) {
      const int64_t z = od * g.stride - g.pad + zk;
      if (z < 0 || z >= g.D) continue;
      for (int64_t yk = 0; yk < g.kh; ++yk) {
        for (int64_t xk = 0; xk < g.kw; ++xk) {
          const int64_t krow = ((ci * g.kd + zk) * g.kh + yk) * g.kw + xk;
          const real* crow = col + krow * cols;
          for (int64_t oy = 0; oy < g.OH; ++oy) {
            const int64_t y = oy * g.stride - g.pad + yk;
            if (y < 0 || y >= g.H) continue;
            real* xrow = xb + ((ci * g.D + z) * g.H + y) * g.W;
            const real* cptr = crow + oy * g.OW;
            for (int64_t ox = 0; ox < g.OW; ++ox) {
              const int64_t xx = ox * g.stride - g.pad + xk;
              if (xx >= 0 && xx < g.W) xrow[xx] += cptr[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 5 || ws.size() != 5) throw std::invalid_argument("conv3d: rank mismatch");
  if (xs[1] != ws[1]) throw std::invalid_argument("conv3d: channel mismatch");
  ConvGeom g;
  g.B = xs[0]; g.Ci = xs[1]; g.D = xs[2]; g.H = xs[3]; g.W = xs[4];
  g.Co = ws[0]; g.kd = ws[2]; g.kh = ws[3]; g.kw = ws[4];
  g.stride = stride; g.pad = pad;
  g.OD = (g.D + 2 * pad - g.kd) / stride + 1;
  g.OH = (g.H + 2 * pad - g.kh) / stride + 1;
  g.OW = (g.W + 2 * pad - g.kw) / stride + 1;
  if (g.OD < 1 || g.OH < 1 || g.OW < 1) throw std::invalid_argument("conv3d: output dims < 1");
  if (b && b->value.numel() != g.Co) throw std::invalid_argument("conv3d: bias size mismatch");

  const int64_t K = g.Ci * g.kd * g.kh * g.kw;
  const int64_t cols = g.OH * g.OW;
  Tensor out({g.B, g.Co, g.OD, g.OH, g.OW});
  {
    std::vector<real> col(static_cast<size_t>(K * cols));
    MapC Wm(w->value.data(), g.Co, K);
    for (int64_t bb = 0; bb < g.B; ++bb) {
      for (int64_t od = 0; od < g.OD; ++od) {
        im2col_slice(x->value.data(), g, bb, od, col.data());
        MapC Cm(col.data(), K, cols);
        MapM Ym(out.data() + (bb * g.Co * g.OD + od) * cols, g.Co, cols);
        // Y rows for channel co sit at stride OD*cols apart; map each row separately.
        for (int64_t co = 0; co < g.Co; ++co) {
          Eigen::Map<Eigen::RowVectorXd> yrow(
              out.data() + ((bb * g.Co + co) * g.OD + od) * cols, cols);
          yrow.noalias() = Wm.row(co) * Cm;
          if (b) yrow.array() += b->value[co];
        }
        (void)Ym;
      }
    }
  }
  std::vector<Var> parents = {x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(out), std::move(parents), [g, K, cols](Node& self) {
    auto& x = self.parents[0];
    auto& w = self.parents[1];
    std::vector<real> col(static_cast<size_t>(K * cols));
    std::vector<real> dcol(static_cast<size_t>(K * cols));
    MatRM dYm(g.Co, cols);
    MapC Wm(w->value.data(), g.Co, K);
    for (int64_t bb = 0; bb < g.B; ++bb) {
      for (int64_t od = 0; od < g.OD; ++od) {
        for (int64_t co = 0; co < g.Co; ++co)
          dYm.row(co) = Eigen::Map<const Eigen::RowVectorXd>(
              self.grad.data() + ((bb * g.Co + co) * g.OD + od) * cols, cols);
        if (w->requires_grad || x->requires_grad)
          im2col_slice(x->value.data(), g, bb, od, col.data());
        MapC Cm(col.data(), K, cols);
        if (w->requires_grad) {
          MapM dWm(w->grad.data(), g.Co, K);
          dWm.noalias() += dYm * Cm.transpose();
        }
        if (x->requires_grad) {
          MapM dCm(dcol.data(), K, cols);
          dCm.noalias() = Wm.transpose() * dYm;
          col2im_slice_add(dcol.data(), g, bb, od, x->grad.data());
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& b = self.parents[2];
          for (int64_t co = 0; co < g.Co; ++co) b->grad[co] += dYm.row(co).sum();
        }
      }
    }
  });
}

namespace {

struct AxisLerp {
  std::vector<int64_t> i0, i1;
  std::vector<real> w1;  // weight on i1; weight on i0 is 1-w1
};

AxisLerp axis_lerp(int64_t in, int64_t out) {
  AxisLerp a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.w1.resize(out);
  const real s = static_cast<real>(in) / static_cast<real>(out);
  for (int64_t o = 0; o < out; ++o) {
    real src = (o + 0.5) * s - 0.5;
    if (src < 0) src = 0;
    if (src > in - 1) src = static_cast<real>(in - 1);
    const int64_t f = static_cast<int64_t>(std::floor(src));
    a.i0[o] = f;
    a.i1[o] = std::min(f + 1, in - 1);
    a.w1[o] = src - f;
  }
  return a;
}

}  // namespace

Var trilinear_resize(const Var& x, std::array<int64_t, 3> out_dhw) {
  const auto& s = x->value.shape();
  if (s.size() != 5) throw std::invalid_argument("trilinear_resize: expects rank-5 input");
  for (int64_t d : out_dhw)
    if (d < 1) throw std::invalid_argument("trilinear_resize: non-positive target dims");
  const int64_t B = s[0], C = s[1], D = s[2], H = s[3], W = s[4];
  const int64_t OD = out_dhw[0], OH = out_dhw[1], OW = out_dhw[2];
  auto az = std::make_shared<AxisLerp>(axis_lerp(D, OD));
  auto ay = std::make_shared<AxisLerp>(axis_lerp(H, OH));
  auto ax = std::make_shared<AxisLerp>(axis_lerp(W, OW));
  Tensor out({B, C, OD, OH, OW});
  for (int64_t g = 0; g < B * C; ++g) {
    const real* xg = x->value.data() + g * D * H * W;
    real* yg = out.data() + g * OD * OH * OW;
    for (int64_t oz = 0; oz < OD; ++oz) {
      const int64_t z0 = az->i0[oz], z1 = az->i1[oz];
      const real wz = az->w1[oz];
      for (int64_t oy = 0; oy < OH; ++oy) {
        const int64_t y0 = ay->i0[oy], y1 = ay->i1[oy];
        const real wy = ay->w1[oy];
        for (int64_t ox = 0; ox < OW; ++ox) {
          const int64_t x0 = ax->i0[ox], x1 = ax->i1[ox];
          const real wx = ax->w1[ox];
          auto v = [&](int64_t z, int64_t y, int64_t xx) {
            return xg[(z * H + y) * W + xx];
          };
          const real c00 = v(z0, y0, x0) * (1 - wx) + v(z0, y0, x1) * wx;
          const real c01 = v(z0, y1, x0) * (1 - wx) + v(z0, y1, x1) * wx;
          const real c10 = v(z1, y0, x0) * (1 - wx) + v(z1, y0, x1) * wx;
          const real c11 = v(z1, y1, x0) * (1 - wx) + v(z1, y1, x1) * wx;
          const real c0 = c00 * (1 - wy) + c01 * wy;
          const real c1 = c10 * (1 - wy) + c11 * wy;
          yg[(oz * OH + oy) * OW + ox] = c0 * (1 - wz) + c1 * wz;
        }
      }
    }
  }
  return make_node(std::move(out), {x}, [B, C, D, H, W, OD, OH, OW, az, ay, ax](Node& self) {
    auto& p = self.parents[0];
    for (int64_t g = 0; g < B * C; ++g) {
      real* dxg = p->grad.data() + g * D * H * W;
      const real* dyg = self.grad.data() + g * OD * OH * OW;
      for (int64_t oz = 0; oz < OD; ++oz) {
        const int64_t z0 = az->i0[oz], z1 = az->i1[oz];
        const real wz = az->w1[oz];
        for (int64_t oy = 0; oy < OH; ++oy) {
          const int64_t y0 = ay->i0[oy], y1 = ay->i1[oy];
          const real wy = ay->w1[oy];
          for (int64_t ox = 0; ox < OW; ++ox) {
            const int64_t x0 = ax->i0[ox], x1 = ax->i1[ox];
            const real wx = ax->w1[ox];
            const real dy = dyg[(oz * OH + oy) * OW + ox];
            auto acc = [&](int64_t z, int64_t y, int64_t xx, real w) {
              dxg[(z * H + y) * W + xx] += dy * w;
            };
            acc(z0, y0, x0, (1 - wz) * (1 - wy) * (1 - wx));
            acc(z0, y0, x1, (1 - wz) * (1 - wy) * wx);
            acc(z0, y1, x0, (1 - wz) * wy * (1 - wx));
            acc(z0, y1, x1, (1 - wz) * wy * wx);
            acc(z1, y0, x0, wz * (1 - wy) * (1 - wx));
            acc(z1, y0, x1, wz * (1 - wy) * wx);
            acc(z1, y1, x0, wz * wy * (1 - wx));
            acc(z1, y1, x1, wz * wy * wx);
          }
        }
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa.size() != sb.size() || sa.size() < 2)
    throw std::invalid_argument("concat_channels: rank mismatch");
  for (size_t i = 0; i < sa.size(); ++i)
    if (i != 1 && sa[i] != sb[i])
      throw std::invalid_argument("concat_channels: non-channel dims mismatch");
  int64_t inner = 1;
  for (size_t i = 2; i < sa.size(); ++i) inner *= sa[i];
  const int64_t B = sa[0], Ca = sa[1], Cb = sb[1];
  std::vector<int64_t> os = sa;
  os[1] = Ca + Cb;
  Tensor out(os);
  for (int64_t bb = 0; bb < B; ++bb) {
    real* ob = out.data() + bb * (Ca + Cb) * inner;
    std::copy_n(a->value.data() + bb * Ca * inner, Ca * inner, ob);
    std::copy_n(b->value.data() + bb * Cb * inner, Cb * inner, ob + Ca * inner);
  }
  return make_node(std::move(out), {a, b}, [B, Ca, Cb, inner](Node& self) {
    auto& a = self.parents[0];
    auto& b = self.parents[1];
    for (int64_t bb = 0; bb < B; ++bb) {
      const real* gb = self.grad.data() + bb * (Ca + Cb) * inner;
      if (a->requires_grad) {
        real* ga = a->grad.data() + bb * Ca * inner;
        for (int64_t i = 0; i < Ca * inner; ++i) ga[i] += gb[i];
      }
      if (b->requires_grad) {
        real* gbb = b->grad.data() + bb * Cb * inner;
        for (int64_t i = 0; i < Cb * inner; ++i) gbb[i] += gb[Ca * inner + i];
      }
    }
  });
}

Var gather(const Var& x, const std::vector<int64_t>& index, std::vector<int64_t> out_shape) {
  if (shape_numel(out_shape) != static_cast<int64_t>(index.size()))
    throw std::invalid_argument("gather: index size != out numel");
  Tensor out(std::move(out_shape));
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j = index[i];
    out[i] = j < 0 ? 0.0 : x->value[j];
  }
  auto idx = std::make_shared<std::vector<int64_t>>(index);
  return make_node(std::move(out), {x}, [idx](Node& self) {
    auto& p = self.parents[0];
    const int64_t n = self.grad.numel();
    for (int64_t i = 0; i < n; ++i) {
      const int64_t j = (*idx)[i];
      if (j >= 0) p->grad[j] += self.grad[i];
    }
  });
}

Var reshape(const Var& x, std::vector<int64_t> shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_node(std::move(out), {x}, [](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) self.parents[0]->grad[i] += self.grad[i];
  });
}

Var sum(const Var& x) {
  real s = 0;
  for (int64_t i = 0; i < x->value.numel(); ++i) s += x->value[i];
  return make_node(Tensor::scalar(s), {x}, [](Node& self) {
    const real g = self.grad[0];
    auto& p = self.parents[0];
    for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
  });
}

Var inner(const Var& x, const Tensor& t) {
  if (x->value.numel() != t.numel()) throw std::invalid_argument("inner: size mismatch");
  real s = 0;
  for (int64_t i = 0; i < t.numel(); ++i) s += x->value[i] * t[i];
  auto tc = std::make_shared<Tensor>(t);
  return make_node(Tensor::scalar(s), {x}, [tc](Node& self) {
    const real g = self.grad[0];
    auto& p = self.parents[0];
    for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g * (*tc)[i];
  });
}

Var dice_ce_loss(const Var& logits, const Tensor& labels, real dice_w, real ce_w) {
  const auto& s = logits->value.shape();
  if (s.size() != 5) throw std::invalid_argument("dice_ce_loss: logits must be rank-5");
  const int64_t B = s[0], C = s[1];
  const int64_t S = s[2] * s[3] * s[4];
  if (labels.numel() != B * S) throw std::invalid_argument("dice_ce_loss: label size mismatch");
  if (!logits->value.all_finite()) throw std::runtime_error("dice_ce_loss: non-finite logits");
  const int64_t N = B * S;
  const real eps = 1e-6;

  auto probs = std::make_shared<Tensor>(s);
  auto labs = std::make_shared<Tensor>(labels);
  real ce = 0;
  std::vector<real> num(C, 0.0), den(C, 0.0);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t v = 0; v < S; ++v) {
      real m = -1e300;
      for (int64_t c = 0; c < C; ++c)
        m = std::max(m, logits->value[(b * C + c) * S + v]);
      real z = 0;
      for (int64_t c = 0; c < C; ++c) {
        const real e = std::exp(logits->value[(b * C + c) * S + v] - m);
        (*probs)[(b * C + c) * S + v] = e;
        z += e;
      }
      const int64_t t = static_cast<int64_t>(labels[b * S + v]);
      if (t < 0 || t >= C) throw std::invalid_argument("dice_ce_loss: label out of range");
      for (int64_t c = 0; c < C; ++c) {
        real& p = (*probs)[(b * C + c) * S + v];
        p /= z;
        den[c] += p;
        if (c == t) {
          num[c] += p;
          den[c] += 1.0;
        }
      }
      ce -= std::log(std::max((*probs)[(b * C + t) * S + v], 1e-300));
    }
  }
  ce /= static_cast<real>(N);

  real dice_loss = 0;
  auto coef = std::make_shared<std::vector<real>>(2 * C, 0.0);  // per class: dnum, dden factors
  const int64_t nfg = C - 1;
  for (int64_t c = 1; c < C; ++c) {
    const real d = (2 * num[c] + eps) / (den[c] + eps);
    dice_loss += 1.0 - d;
    // d(Ld)/dnum_c and d(Ld)/dden_c, already averaged over foreground classes.
    (*coef)[2 * c] = -2.0 / (den[c] + eps) / nfg;
    (*coef)[2 * c + 1] = (2 * num[c] + eps) / ((den[c] + eps) * (den[c] + eps)) / nfg;
  }
  dice_loss /= static_cast<real>(nfg);

  const real loss = ce_w * ce + dice_w * dice_loss;
  return make_node(Tensor::scalar(loss), {logits},
                   [B, C, S, N, probs, labs, coef, dice_w, ce_w](Node& self) {
    auto& lg = self.parents[0];
    const real g = self.grad[0];
    std::vector<real> gp(C);
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t v = 0; v < S; ++v) {
        const int64_t t = static_cast<int64_t>((*labs)[b * S + v]);
        // dice term through the softmax Jacobian
        real dot = 0;
        for (int64_t c = 0; c < C; ++c) {
          const real p = (*probs)[(b * C + c) * S + v];
          real gc = 0;
          if (c >= 1) gc = ((c == t) ? (*coef)[2 * c] : 0.0) + (*coef)[2 * c + 1];
          gp[c] = gc;
          dot += gc * p;
        }
        for (int64_t c = 0; c < C; ++c) {
          const real p = (*probs)[(b * C + c) * S + v];
          real dz = dice_w * p * (gp[c] - dot);
          dz += ce_w * (p - (c == t ? 1.0 : 0.0)) / static_cast<real>(N);
          lg->grad[(b * C + c) * S + v] += g * dz;
        }
      }
    }
  });
}

}  // namespace ctn::ops
