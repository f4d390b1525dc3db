#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "edgeseg/error.hpp"
#include "edgeseg/kernels.hpp"
#include "support/reference_ops.hpp"

using namespace edgeseg;

namespace {

template <typename T>
ConvParams<T> make_conv(Tensor<T> w, std::vector<T> bias = {}, int stride = 1,
                        int pad = 0) {
  ConvParams<T> p;
  p.weights = std::move(w);
  p.bias = std::move(bias);
  p.stride_h = p.stride_w = stride;
  p.pad_h = p.pad_w = pad;
  return p;
}

}  // namespace

TEST_CASE("conv2d 1x1 kernel is a scalar multiply") {
  Tensor<float> x(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
  auto p = make_conv(Tensor<float>(Shape4{1, 1, 1, 1}, {2}));
  Tensor<float> y = conv2d(x, p);
  CHECK(y.shape() == Shape4{1, 1, 2, 2});
  CHECK(y[0] == 2.0f);
  CHECK(y[1] == 4.0f);
  CHECK(y[2] == 6.0f);
  CHECK(y[3] == 8.0f);
}

TEST_CASE("conv2d 8x8 stride-8 all-ones sums the window") {
  Tensor<float> x = Tensor<float>::full(Shape4{1, 1, 8, 8}, 1.0f);
  auto p = make_conv(Tensor<float>::full(Shape4{1, 1, 8, 8}, 1.0f), {}, 8, 0);
  Tensor<float> y = conv2d(x, p);
  CHECK(y.shape() == Shape4{1, 1, 1, 1});
  CHECK(y[0] == doctest::Approx(64.0f));
}

TEST_CASE("conv2d matches the direct-summation oracle on the seeded case") {
  SUBCASE("single precision") {
    auto x = refops::random_tensor<float>(Shape4{1, 2, 9, 9}, 7);
    auto w = refops::random_tensor<float>(Shape4{4, 2, 3, 3}, 11);
    auto got = conv2d(x, make_conv(w, {}, 2, 1));
    auto want = refops::conv2d_direct(x, w, {}, 2, 2, 1, 1);
    CHECK(refops::max_rel_err(got, want) < 1e-5);
  }
  SUBCASE("double precision") {
    auto x = refops::random_tensor<double>(Shape4{1, 2, 9, 9}, 7);
    auto w = refops::random_tensor<double>(Shape4{4, 2, 3, 3}, 11);
    auto got = conv2d(x, make_conv(w, {}, 2, 1));
    auto want = refops::conv2d_direct(x, w, {}, 2, 2, 1, 1);
    CHECK(refops::max_rel_err(got, want) < 1e-12);
  }
}

TEST_CASE("conv2d oracle sweep over kernels and strides") {
  Rng rng(2024);
  int cases = 0;
  while (cases < 60) {
    const int k = std::array{1, 3, 8}[rng.uniform_int(3)];
    const int s = std::array{1, 2, 8}[rng.uniform_int(3)];
    const int n = 1 + static_cast<int>(rng.uniform_int(4));
    const int ci = 1 + static_cast<int>(rng.uniform_int(4));
    const int co = 1 + static_cast<int>(rng.uniform_int(4));
    const int h = 1 + static_cast<int>(rng.uniform_int(12));
    const int w = 1 + static_cast<int>(rng.uniform_int(12));
    const int pad = static_cast<int>(rng.uniform_int(3));
    if ((h + 2 * pad - k) / s + 1 < 1 || (w + 2 * pad - k) / s + 1 < 1)
      continue;
    const bool with_bias = rng.uniform_int(2) == 0;
    ++cases;

    auto x = refops::random_tensor<float>(Shape4{n, ci, h, w}, rng.next_u64());
    auto wt =
        refops::random_tensor<float>(Shape4{co, ci, k, k}, rng.next_u64());
    std::vector<float> bias;
    if (with_bias) {
      Rng brng(rng.next_u64());
      for (int i = 0; i < co; ++i)
        bias.push_back(static_cast<float>(brng.uniform(-1, 1)));
    }
    auto got = conv2d(x, make_conv(wt, bias, s, pad));
    auto want = refops::conv2d_direct(x, wt, bias, s, s, pad, pad);
    CAPTURE(k);
    CAPTURE(s);
    CAPTURE(n);
    REQUIRE(refops::max_rel_err(got, want) < 1e-5);
  }
}

TEST_CASE("conv2d with Kronecker-delta 1x1 weights reproduces the input") {
  auto x = refops::random_tensor<float>(Shape4{2, 3, 5, 7}, 99);
  Tensor<float> w(Shape4{3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) w.at(i, i, 0, 0) = 1.0f;
  Tensor<float> y = conv2d(x, make_conv(w));
  CHECK(y == x);
}

TEST_CASE("conv2d shape errors") {
  auto x = refops::random_tensor<float>(Shape4{1, 2, 4, 4}, 1);
  CHECK_THROWS_AS(
      conv2d(x, make_conv(refops::random_tensor<float>(Shape4{1, 3, 1, 1}, 2))),
      ShapeError);
  // 8x8 kernel on a 4x4 input: non-positive output extent.
  CHECK_THROWS_AS(
      conv2d(x, make_conv(refops::random_tensor<float>(Shape4{1, 2, 8, 8}, 3))),
      ShapeError);
}

TEST_CASE("conv2d is pure: identical inputs give bit-identical outputs") {
  auto x = refops::random_tensor<float>(Shape4{2, 3, 9, 9}, 5);
  auto w = refops::random_tensor<float>(Shape4{4, 3, 3, 3}, 6);
  auto p = make_conv(w, {}, 2, 1);
  CHECK(conv2d(x, p) == conv2d(x, p));
}

TEST_CASE("batch_norm identity parameters reproduce the input") {
  auto x = refops::random_tensor<float>(Shape4{1, 4, 3, 3}, 21);
  std::vector<float> ones(4, 1.0f), zeros(4, 0.0f);
  // eps must be positive; tiny eps keeps the identity within float rounding.
  Tensor<float> y = batch_norm<float>(x, ones, zeros, zeros, ones, 1e-12f);
  CHECK(refops::max_rel_err(y, x) < 1e-6);
}

TEST_CASE("batch_norm scalar example") {
  Tensor<float> x(Shape4{1, 1, 1, 1}, {3.0f});
  std::vector<float> gamma{2.0f}, beta{1.0f}, mean{1.0f}, var{4.0f};
  Tensor<float> y = batch_norm<float>(x, gamma, beta, mean, var, 1e-20f);
  CHECK(y[0] == doctest::Approx(3.0f));
}

TEST_CASE("batch_norm matches the per-element scalar oracle") {
  auto x = refops::random_tensor<double>(Shape4{2, 8, 5, 5}, 31);
  std::vector<double> gamma, beta, mean, var;
  Rng rng(77);
  for (int c = 0; c < 8; ++c) {
    gamma.push_back(rng.uniform(0.5, 2.0));
    beta.push_back(rng.uniform(-1.0, 1.0));
    mean.push_back(rng.uniform(-1.0, 1.0));
    var.push_back(rng.uniform(0.1, 2.0));
  }
  const double eps = 1e-5;
  Tensor<double> got = batch_norm<double>(x, gamma, beta, mean, var, eps);
  Tensor<double> want = refops::batch_norm_scalar(x, gamma, beta, mean, var, eps);
  CHECK(refops::max_rel_err(got, want) < 1e-6);
}

TEST_CASE("batch_norm vector length mismatch is a shape error") {
  auto x = refops::random_tensor<float>(Shape4{1, 4, 2, 2}, 3);
  std::vector<float> three(3, 1.0f), four(4, 1.0f);
  CHECK_THROWS_AS(batch_norm<float>(x, three, four, four, four, 1e-5f),
                  ShapeError);
}

TEST_CASE("relu examples and idempotence") {
  Tensor<float> x(Shape4{1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f});
  Tensor<float> y = relu(x);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);

  Tensor<float> neg = Tensor<float>::full(Shape4{2, 2, 2, 2}, -3.5f);
  Tensor<float> z = relu(neg);
  for (std::int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0f);

  auto r = refops::random_tensor<float>(Shape4{2, 3, 4, 5}, 404);
  CHECK(relu(relu(r)) == relu(r));
}

TEST_CASE("bilinear_upsample of a constant stays constant") {
  Tensor<float> x = Tensor<float>::full(Shape4{1, 2, 3, 4}, 5.0f);
  Tensor<float> y = bilinear_upsample(x, 2);
  CHECK(y.shape() == Shape4{1, 2, 6, 8});
  for (std::int64_t i = 0; i < y.numel(); ++i)
    CHECK(y[i] == doctest::Approx(5.0f));
}

TEST_CASE("bilinear_upsample half-pixel example row") {
  Tensor<float> x(Shape4{1, 1, 1, 2}, {1.0f, 3.0f});
  Tensor<float> y = bilinear_upsample(x, 2);
  REQUIRE(y.shape() == Shape4{1, 1, 2, 4});
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1.0f));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(1.5f));
  CHECK(y.at(0, 0, 0, 2) == doctest::Approx(2.5f));
  CHECK(y.at(0, 0, 0, 3) == doctest::Approx(3.0f));
}

TEST_CASE("bilinear_upsample shape arithmetic and argument checks") {
  auto x = refops::random_tensor<float>(Shape4{1, 4, 11, 13}, 8);
  CHECK(bilinear_upsample(x, 8).shape() == Shape4{1, 4, 88, 104});
  CHECK_THROWS_AS(bilinear_upsample(x, 1), ArgumentError);
}

TEST_CASE("bilinear_upsample preserves global min and max") {
  Rng rng(606);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = refops::random_tensor<float>(
        Shape4{1, 1 + static_cast<int>(rng.uniform_int(3)),
               1 + static_cast<int>(rng.uniform_int(6)),
               1 + static_cast<int>(rng.uniform_int(6))},
        rng.next_u64());
    const int scale = 2 + static_cast<int>(rng.uniform_int(7));
    Tensor<float> y = bilinear_upsample(x, scale);
    float in_min = x[0], in_max = x[0], out_min = y[0], out_max = y[0];
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      in_min = std::min(in_min, x[i]);
      in_max = std::max(in_max, x[i]);
    }
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      out_min = std::min(out_min, y[i]);
      out_max = std::max(out_max, y[i]);
    }
    CHECK(out_min >= in_min - 1e-6f);
    CHECK(out_max <= in_max + 1e-6f);
  }
}

TEST_CASE("add_elementwise identities") {
  auto a = refops::random_tensor<float>(Shape4{2, 2, 3, 3}, 15);
  Tensor<float> zeros(a.shape());
  CHECK(add_elementwise(a, zeros) == a);

  auto b = refops::random_tensor<float>(Shape4{2, 2, 3, 3}, 16);
  CHECK(add_elementwise(a, b) == add_elementwise(b, a));

  Tensor<float> u(Shape4{1, 1, 1, 2}, {1.0f, 2.0f});
  Tensor<float> v(Shape4{1, 1, 1, 2}, {3.0f, 4.0f});
  Tensor<float> s = add_elementwise(u, v);
  CHECK(s[0] == 4.0f);
  CHECK(s[1] == 6.0f);

  Tensor<float> other(Shape4{1, 1, 2, 1});
  CHECK_THROWS_AS(add_elementwise(u, other), ShapeError);
}

TEST_CASE("argmax_channel tie and trivial cases") {
  auto one = refops::random_tensor<float>(Shape4{2, 1, 3, 3}, 17);
  LabelMap z = argmax_channel(one);
  for (auto v : z.values()) CHECK(v == 0);

  Tensor<float> x(Shape4{1, 5, 2, 2});
  for (int h = 0; h < 2; ++h)
    for (int w = 0; w < 2; ++w) x.at(0, 3, h, w) = 10.0f;
  LabelMap m = argmax_channel(x);
  for (auto v : m.values()) CHECK(v == 3);

  // Exact tie between channels 1 and 4 resolves to the lower index.
  Tensor<float> t(Shape4{1, 5, 1, 1});
  t.at(0, 1, 0, 0) = 7.0f;
  t.at(0, 4, 0, 0) = 7.0f;
  CHECK(argmax_channel(t).at(0, 0, 0) == 1);
}

TEST_CASE("kernels keep finite inputs finite") {
  auto x = refops::random_tensor<float>(Shape4{1, 3, 8, 8}, 23, -10.0, 10.0);
  auto w = refops::random_tensor<float>(Shape4{4, 3, 3, 3}, 24, -10.0, 10.0);
  Tensor<float> y = conv2d(x, make_conv(w, {}, 1, 1));
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y[i]));
  Tensor<float> u = bilinear_upsample(y, 3);
  for (std::int64_t i = 0; i < u.numel(); ++i) CHECK(std::isfinite(u[i]));
}
