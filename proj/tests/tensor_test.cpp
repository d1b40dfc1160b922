#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aio/errors.hpp"
#include "aio/tensor.hpp"
#include "test_util.hpp"

using namespace aio;
using ad::Tensor;
using testutil::fd_check;
using testutil::random_tensor;

namespace {
constexpr double kTol = 1e-6;  // op-level gradient agreement
}

TEST_CASE("elementwise ops: values and gradients") {
  auto a = random_tensor({4, 5}, 1);
  auto b = random_tensor({4, 5}, 2);
  // keep div away from zero
  for (auto& v : b.values()) v += (v >= 0 ? 2.0 : -2.0);

  CHECK(ad::add(a, b).values()[3] == doctest::Approx(a.values()[3] + b.values()[3]));

  CHECK(fd_check([&] { return ad::sum_all(ad::mul(ad::add(a, b), ad::sub(a, b))); },
                 {a, b}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::div(a, b)); }, {a, b}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::exp_(ad::mul_scalar(a, 0.3))); }, {a}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::tanh_(a)); }, {a}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::gelu(a)); }, {a}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(a)); }, {a}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::log_(ad::add_scalar(ad::square(a), 1.0))); },
                 {a}) < kTol);
}

TEST_CASE("abs gradient away from kink") {
  auto a = random_tensor({10}, 3);
  for (auto& v : a.values())
    if (std::fabs(v) < 0.2) v += 0.5;
  CHECK(fd_check([&] { return ad::sum_all(ad::abs_(a)); }, {a}) < kTol);
}

TEST_CASE("reductions") {
  auto a = random_tensor({3, 4}, 4);
  CHECK(ad::mean_all(a).item() ==
        doctest::Approx([&] {
          double s = 0;
          for (double v : a.values()) s += v;
          return s / 12.0;
        }()));
  CHECK(fd_check([&] { return ad::mean_all(ad::square(a)); }, {a}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::mean_rows(a))); }, {a}) < kTol);

  auto x = random_tensor({2, 3, 3}, 5);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::mean_spatial(x))); }, {x}) < kTol);
}

TEST_CASE("matmul, transpose, linear") {
  auto a = random_tensor({3, 4}, 6);
  auto b = random_tensor({4, 5}, 7);
  auto y = ad::matmul(a, b);
  REQUIRE(y.shape() == ad::Shape{3, 5});
  // spot value
  double acc = 0;
  for (int k = 0; k < 4; ++k) acc += a.values()[1 * 4 + k] * b.values()[k * 5 + 2];
  CHECK(y.values()[1 * 5 + 2] == doctest::Approx(acc));

  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::matmul(a, b))); }, {a, b}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::transpose2(a))); }, {a}) < kTol);

  auto x = random_tensor({4}, 8);
  auto w = random_tensor({3, 4}, 9);
  auto bias = random_tensor({3}, 10);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::linear(x, w, bias))); },
                 {x, w, bias}) < kTol);
}

TEST_CASE("softmax rows sum to one and gradients agree") {
  auto a = random_tensor({4, 6}, 11);
  auto s = ad::softmax_rows(a);
  for (int r = 0; r < 4; ++r) {
    double sum = 0;
    for (int j = 0; j < 6; ++j) sum += s.values()[r * 6 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto coeff = random_tensor({4, 6}, 12);
  CHECK(fd_check([&] { return ad::sum_all(ad::mul(ad::softmax_rows(a), coeff)); }, {a}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::softmax_vec(
                     random_tensor({5}, 13)))); },
                 {a}) == 0.0);  // no grad path to a; just exercises the op
}

TEST_CASE("l2 normalize") {
  auto a = random_tensor({3, 7}, 14);
  auto n = ad::l2_normalize_rows(a);
  for (int r = 0; r < 3; ++r) {
    double q = 0;
    for (int j = 0; j < 7; ++j) q += n.values()[r * 7 + j] * n.values()[r * 7 + j];
    CHECK(std::sqrt(q) == doctest::Approx(1.0).epsilon(1e-9));
  }
  auto coeff = random_tensor({3, 7}, 15);
  CHECK(fd_check([&] { return ad::sum_all(ad::mul(ad::l2_normalize_rows(a), coeff)); },
                 {a}) < kTol);

  auto v = random_tensor({9}, 16);
  auto cv = random_tensor({9}, 17);
  CHECK(fd_check([&] { return ad::dot(ad::l2_normalize(v), cv); }, {v}) < kTol);
}

TEST_CASE("cosine similarity") {
  auto a = ad::Tensor::from({2}, {1.0, 0.0});
  auto b = ad::Tensor::from({2}, {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
  CHECK(ad::cosine_similarity(a, a).item() == doctest::Approx(1.0));
  CHECK(ad::cosine_similarity(a, b).item() == doctest::Approx(0.7071).epsilon(1e-4));
  auto o = ad::Tensor::from({2}, {0.0, 1.0});
  CHECK(ad::cosine_similarity(a, o).item() == doctest::Approx(0.0));
  auto z = ad::Tensor::from({2}, {0.0, 0.0});
  CHECK_THROWS_AS((void)ad::cosine_similarity(a, z), NumericError);

  auto x = random_tensor({6}, 18);
  auto y = random_tensor({6}, 19);
  CHECK(fd_check([&] { return ad::cosine_similarity(x, y); }, {x, y}) < kTol);
}

TEST_CASE("shape ops") {
  auto a = random_tensor({2, 3, 4}, 20);
  auto b = random_tensor({5, 3, 4}, 21);
  auto cat = ad::concat0({a, b});
  REQUIRE(cat.shape() == ad::Shape{7, 3, 4});
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::concat0({a, b}))); }, {a, b}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::slice0(a, 1, 1))); }, {a}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::reshape(a, {4, 6}))); }, {a}) < kTol);

  auto s0 = ad::Tensor::scalar(1.5, true);
  auto s1 = ad::Tensor::scalar(-0.5, true);
  auto st = ad::stack_scalars({s0, s1});
  REQUIRE(st.shape() == ad::Shape{2});
  CHECK(ad::pick(st, 1).item() == doctest::Approx(-0.5));
}

TEST_CASE("conv2d shapes and gradients") {
  auto x = random_tensor({3, 8, 8}, 22);
  auto w = random_tensor({6, 3, 3, 3}, 23, 0.3);
  auto b = random_tensor({6}, 24, 0.1);

  auto y = ad::conv2d(x, w, b, 1, 1, 1);
  REQUIRE(y.shape() == ad::Shape{6, 8, 8});
  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::conv2d(x, w, b, 1, 1, 1))); },
                 {x, w, b}, 6) < kTol);

  // stride 2
  auto y2 = ad::conv2d(x, w, b, 2, 1, 1);
  REQUIRE(y2.shape() == ad::Shape{6, 4, 4});
  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::conv2d(x, w, b, 2, 1, 1))); },
                 {x, w, b}, 6) < kTol);

  // depthwise (groups = channels), 1x1 pointwise
  auto xd = random_tensor({4, 6, 6}, 25);
  auto wd = random_tensor({4, 1, 3, 3}, 26, 0.4);
  auto bd = random_tensor({4}, 27, 0.1);
  auto yd = ad::conv2d(xd, wd, bd, 1, 1, 4);
  REQUIRE(yd.shape() == ad::Shape{4, 6, 6});
  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::conv2d(xd, wd, bd, 1, 1, 4))); },
                 {xd, wd, bd}, 6) < kTol);

  auto wp = random_tensor({5, 4, 1, 1}, 28, 0.5);
  ad::Tensor nobias;
  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::conv2d(xd, wp, nobias, 1, 0, 1))); },
                 {xd, wp}, 6) < kTol);
}

TEST_CASE("conv2d matches a hand-computed example") {
  // 1 channel, 3x3 input, 3x3 averaging kernel, pad 1
  auto x = ad::Tensor::from({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto w = ad::Tensor::full({1, 1, 3, 3}, 1.0);
  ad::Tensor nobias;
  auto y = ad::conv2d(x, w, nobias, 1, 1, 1);
  // center output sees the whole image
  CHECK(y.values()[4] == doctest::Approx(45.0));
  // corner output sees the 2x2 block
  CHECK(y.values()[0] == doctest::Approx(1 + 2 + 4 + 5));
}

TEST_CASE("pixel shuffle round trip and gradients") {
  auto x = random_tensor({8, 4, 4}, 29);
  auto down = ad::pixel_unshuffle(x, 2);
  REQUIRE(down.shape() == ad::Shape{32, 2, 2});
  auto back = ad::pixel_shuffle(down, 2);
  REQUIRE(back.shape() == ad::Shape{8, 4, 4});
  for (int i = 0; i < x.numel(); ++i)
    CHECK(back.values()[i] == doctest::Approx(x.values()[i]));

  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::pixel_unshuffle(x, 2))); }, {x}) < kTol);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::pixel_shuffle(x, 2))); }, {x}) < kTol);
}

TEST_CASE("layernorm_chw") {
  auto x = random_tensor({6, 3, 3}, 30);
  auto g = random_tensor({6}, 31, 0.5);
  for (auto& v : g.values()) v += 1.0;
  auto b = random_tensor({6}, 32, 0.2);

  auto y = ad::layernorm_chw(x, g, b);
  REQUIRE(y.shape() == x.shape());
  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::layernorm_chw(x, g, b))); },
                 {x, g, b}, 10) < kTol);
}

TEST_CASE("scale_shift_chw and scale_by") {
  auto x = random_tensor({4, 3, 3}, 33);
  auto s = random_tensor({4}, 34);
  auto t = random_tensor({4}, 35);
  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::scale_shift_chw(x, s, t))); },
                 {x, s, t}) < kTol);

  auto sc = ad::Tensor::scalar(1.3, true);
  CHECK(fd_check([&] { return ad::sum_all(ad::square(ad::scale_by(x, sc))); }, {x, sc}) < kTol);
}

TEST_CASE("resize_bilinear") {
  auto x = random_tensor({3, 6, 8}, 36);
  auto up = ad::resize_bilinear(x, 12, 16);
  REQUIRE(up.shape() == ad::Shape{3, 12, 16});
  auto dn = ad::resize_bilinear(x, 3, 4);
  REQUIRE(dn.shape() == ad::Shape{3, 3, 4});
  // identity when size unchanged
  auto same = ad::resize_bilinear(x, 6, 8);
  for (int i = 0; i < x.numel(); ++i)
    CHECK(same.values()[i] == doctest::Approx(x.values()[i]));

  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::resize_bilinear(x, 4, 5))); },
                 {x}, 10) < kTol);
  CHECK(fd_check([&] { return ad::mean_all(ad::square(ad::resize_bilinear(x, 9, 11))); },
                 {x}, 10) < kTol);
}

TEST_CASE("gradient accumulates across reuse") {
  auto a = ad::Tensor::scalar(3.0, true);
  auto y = ad::mul(a, a);  // a^2, da = 2a = 6
  a.zero_grad();
  ad::backward(y);
  CHECK(a.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward is a no-op for constant graphs") {
  auto a = ad::Tensor::scalar(2.0);
  auto y = ad::mul(a, a);
  CHECK_NOTHROW(ad::backward(y));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shape errors throw") {
  auto a = random_tensor({2, 3}, 37);
  auto b = random_tensor({3, 3}, 38);
  CHECK_THROWS_AS((void)ad::add(a, b), ContractError);
  CHECK_THROWS_AS((void)ad::matmul(a, a), ContractError);
  CHECK_THROWS_AS((void)ad::reshape(a, {5}), ContractError);
  CHECK_THROWS_AS((void)ad::backward(a), ContractError);
}
