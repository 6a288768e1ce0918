#include <doctest.h>

#include "ctn/ops.hpp"

#include "test_util.hpp"

using namespace ctn;
using test::fd_check;
using test::random_tensor;

namespace {

// Reduce any tensor to a scalar with a fixed random weighting so every
// element influences the output.
Var weighted(const Var& x, Rng& rng) {
  Tensor w = random_tensor(x->value.shape(), rng);
  return ops::inner(x, w);
}

Var leaf_of(const Tensor& t) { return make_leaf(t, /*requires_grad=*/true); }

}  // namespace

TEST_CASE("backward requires a scalar root") {
  Var x = leaf_of(Tensor::full({2, 2}, 1.0));
  CHECK_THROWS(backward(x));
}

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(7);
  Var a = leaf_of(random_tensor({3, 4}, rng));
  Var b = leaf_of(random_tensor({3, 4}, rng));

  SUBCASE("add") {
    auto r = fd_check(
        [&] {
          Rng w(11);
          return weighted(ops::add(a, b), w);
        },
        {a, b});
    CHECK(r.max_rel < 1e-6);
  }
  SUBCASE("sub/mul/scale") {
    auto r = fd_check(
        [&] {
          Rng w(12);
          return weighted(ops::mul(ops::sub(a, b), ops::scale(a, 0.5)), w);
        },
        {a, b});
    CHECK(r.max_rel < 1e-5);
  }
  SUBCASE("relu and leaky_relu away from kinks") {
    auto r = fd_check(
        [&] {
          Rng w(13);
          return weighted(ops::relu(a), w);
        },
        {a});
    CHECK(r.max_rel < 1e-5);
    r = fd_check(
        [&] {
          Rng w(14);
          return weighted(ops::leaky_relu(a, 0.01), w);
        },
        {a});
    CHECK(r.max_rel < 1e-5);
  }
  SUBCASE("gelu") {
    auto r = fd_check(
        [&] {
          Rng w(15);
          return weighted(ops::gelu(a), w);
        },
        {a});
    CHECK(r.max_rel < 1e-5);
  }
}

TEST_CASE("linear and matmul match finite differences") {
  Rng rng(21);
  Var x = leaf_of(random_tensor({5, 3}, rng));
  Var w = leaf_of(random_tensor({4, 3}, rng));
  Var b = leaf_of(random_tensor({4}, rng));
  auto r = fd_check(
      [&] {
        Rng wr(22);
        return weighted(ops::linear(x, w, b), wr);
      },
      {x, w, b});
  CHECK(r.max_rel < 1e-5);

  Var a = leaf_of(random_tensor({2, 3, 4}, rng));
  Var m = leaf_of(random_tensor({2, 4, 5}, rng));
  r = fd_check(
      [&] {
        Rng wr(23);
        return weighted(ops::matmul(a, m), wr);
      },
      {a, m});
  CHECK(r.max_rel < 1e-5);

  Var mt = leaf_of(random_tensor({2, 5, 4}, rng));
  r = fd_check(
      [&] {
        Rng wr(24);
        return weighted(ops::matmul_bt(a, mt), wr);
      },
      {a, mt});
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("softmax rows sum to one and gradients check out") {
  Rng rng(31);
  Var x = leaf_of(random_tensor({3, 6}, rng));
  Var s = ops::softmax_lastdim(x);
  for (int64_t row = 0; row < 3; ++row) {
    real sum = 0;
    for (int64_t j = 0; j < 6; ++j) sum += s->value[row * 6 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto r = fd_check(
      [&] {
        Rng wr(32);
        return weighted(ops::softmax_lastdim(x), wr);
      },
      {x});
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("normalization gradients check out") {
  Rng rng(41);
  Var x = leaf_of(random_tensor({4, 6}, rng));
  Var g = leaf_of(random_tensor({6}, rng, 0.5));
  Var b = leaf_of(random_tensor({6}, rng, 0.5));
  auto r = fd_check(
      [&] {
        Rng wr(42);
        return weighted(ops::layer_norm(x, g, b), wr);
      },
      {x, g, b});
  CHECK(r.max_rel < 1e-4);

  Var xv = leaf_of(random_tensor({1, 3, 2, 3, 2}, rng));
  Var gv = leaf_of(random_tensor({3}, rng, 0.5));
  Var bv = leaf_of(random_tensor({3}, rng, 0.5));
  r = fd_check(
      [&] {
        Rng wr(43);
        return weighted(ops::instance_norm(xv, gv, bv), wr);
      },
      {xv, gv, bv});
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("conv3d matches finite differences") {
  Rng rng(51);
  Var x = leaf_of(random_tensor({1, 2, 4, 5, 4}, rng));
  Var w = leaf_of(random_tensor({3, 2, 3, 3, 3}, rng, 0.3));
  Var b = leaf_of(random_tensor({3}, rng, 0.1));
  auto r = fd_check(
      [&] {
        Rng wr(52);
        return weighted(ops::conv3d(x, w, b, 1, 1), wr);
      },
      {x, w, b});
  CHECK(r.max_rel < 1e-4);

  // Strided, no padding, no bias.
  r = fd_check(
      [&] {
        Rng wr(53);
        return weighted(ops::conv3d(x, w, nullptr, 2, 1), wr);
      },
      {x, w});
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("conv3d matches a hand-computed 1x1x1 case") {
  // With a 1-voxel kernel the convolution is a per-voxel linear map.
  Tensor x({1, 2, 1, 1, 2});
  x[0] = 1.0; x[1] = 2.0; x[2] = 3.0; x[3] = 4.0;
  Tensor w({1, 2, 1, 1, 1});
  w[0] = 10.0; w[1] = 100.0;
  Var y = ops::conv3d(make_leaf(x), make_leaf(w), nullptr, 1, 0);
  CHECK(y->value[0] == doctest::Approx(1 * 10 + 3 * 100));
  CHECK(y->value[1] == doctest::Approx(2 * 10 + 4 * 100));
}

TEST_CASE("trilinear resize, concat, gather gradients") {
  Rng rng(61);
  Var x = leaf_of(random_tensor({1, 2, 3, 4, 3}, rng));
  auto r = fd_check(
      [&] {
        Rng wr(62);
        return weighted(ops::trilinear_resize(x, {5, 6, 5}), wr);
      },
      {x});
  CHECK(r.max_rel < 1e-5);

  Var y = leaf_of(random_tensor({1, 3, 3, 4, 3}, rng));
  r = fd_check(
      [&] {
        Rng wr(63);
        return weighted(ops::concat_channels(x, y), wr);
      },
      {x, y});
  CHECK(r.max_rel < 1e-5);

  std::vector<int64_t> idx{3, -1, 0, 5, 5, 2};
  r = fd_check(
      [&] {
        Rng wr(64);
        return weighted(ops::gather(x, idx, {2, 3}), wr);
      },
      {x});
  CHECK(r.max_rel < 1e-5);
  // -1 means "pad with zero".
  Var g = ops::gather(x, idx, {2, 3});
  CHECK(g->value[1] == 0.0);
}

TEST_CASE("attention score helpers") {
  Rng rng(71);
  Var scores = leaf_of(random_tensor({4, 2, 3, 3}, rng));
  Var bias = leaf_of(random_tensor({2, 3, 3}, rng));
  auto r = fd_check(
      [&] {
        Rng wr(72);
        return weighted(ops::add_bias_windows(scores, bias), wr);
      },
      {scores, bias});
  CHECK(r.max_rel < 1e-5);

  Tensor mask({2, 3, 3});
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = (i % 4 == 0) ? -1e9 : 0.0;
  Var masked = ops::add_mask(scores, mask);
  CHECK(masked->value[0] == doctest::Approx(scores->value[0] - 1e9));
  // Finite differences need a mild offset; the gradient is mask-independent.
  Tensor mild({2, 3, 3});
  for (int64_t i = 0; i < mild.numel(); ++i) mild[i] = (i % 4 == 0) ? -10.0 : 0.0;
  r = fd_check(
      [&] {
        Rng wr(73);
        return weighted(ops::add_mask(scores, mild), wr);
      },
      {scores});
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("dice+ce loss gradient matches finite differences") {
  Rng rng(81);
  Var logits = leaf_of(random_tensor({1, 3, 2, 3, 2}, rng));
  Tensor labels({1, 2, 3, 2});
  for (int64_t i = 0; i < labels.numel(); ++i) labels[i] = static_cast<real>(i % 3);
  auto r = fd_check([&] { return ops::dice_ce_loss(logits, labels, 1.0, 1.0); }, {logits});
  CHECK(r.max_rel < 1e-4);
  // Dice-only and CE-only paths.
  r = fd_check([&] { return ops::dice_ce_loss(logits, labels, 1.0, 0.0); }, {logits});
  CHECK(r.max_rel < 1e-4);
  r = fd_check([&] { return ops::dice_ce_loss(logits, labels, 0.0, 1.0); }, {logits});
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Var x = leaf_of(Tensor::scalar(3.0));
  Var y = ops::mul(x, x);  // d/dx = 2x
  backward(y);
  CHECK(x->grad[0] == doctest::Approx(6.0));
  // A second backward pass must not double-count stale gradients.
  Var z = ops::mul(x, x);
  backward(z);
  CHECK(x->grad[0] == doctest::Approx(6.0));
}
