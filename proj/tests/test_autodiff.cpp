#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "sketchfill/adam.hpp"
#include "sketchfill/autodiff.hpp"
#include "sketchfill/binio.hpp"
#include "sketchfill/checkpoint.hpp"
#include "sketchfill/error.hpp"
#include "sketchfill/gradcheck.hpp"

using namespace sketchfill;
using ad::Tensor;
using T = Tensor<double>;

namespace {

T random_tensor(const ad::Shape& shape, std::uint64_t seed, bool variable = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
  for (auto& x : v) x = nd(rng);
  return variable ? T::variable(shape, v) : T::from(shape, v);
}

// Direct correlation with zero padding: the oracle for conv2d.
std::vector<double> direct_conv(const T& x, const T& w, int stride, int pad, int dil) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = w.dim(0), K = w.dim(2);
  const auto Ho = (H + 2 * pad - dil * (K - 1) - 1) / stride + 1;
  const auto Wo = (W + 2 * pad - dil * (K - 1) - 1) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(N * O * Ho * Wo), 0.0);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double s = 0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < K; ++i)
              for (std::int64_t j = 0; j < K; ++j) {
                const auto iy = oy * stride - pad + i * dil, ix = ox * stride - pad + j * dil;
                if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                s += x.data()[((n * C + c) * H + iy) * W + ix] * w.data()[((o * C + c) * K + i) * K + j];
              }
          out[((n * O + o) * Ho + oy) * Wo + ox] = s;
        }
  return out;
}

}  // namespace

TEST_CASE("1x1 identity kernel reproduces the input") {
  const T x = random_tensor({2, 1, 5, 4}, 1);
  const T w = T::from({1, 1, 1, 1}, {1.0});
  const T y = ad::conv2d(x, w, {});
  CHECK(y.shape() == x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dilated conv of a delta image is the spread kernel footprint") {
  std::vector<double> delta(9 * 9, 0.0);
  delta[4 * 9 + 4] = 1.0;
  const T x = T::from({1, 1, 9, 9}, delta);
  const T w = T::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const T y = ad::conv2d(x, w, {1, 2, 2});
  const auto oracle = direct_conv(x, w, 1, 2, 2);
  REQUIRE(y.numel() == static_cast<std::int64_t>(oracle.size()));
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(y.data()[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
  // Correlation flips the kernel around the delta: tap (i,j) lands at (4 - 2(i-1), 4 - 2(j-1)).
  CHECK(y.data()[2 * 9 + 2] == 9.0);
  CHECK(y.data()[6 * 9 + 6] == 1.0);
  CHECK(y.data()[4 * 9 + 4] == 5.0);
  CHECK(y.data()[3 * 9 + 3] == 0.0);
}

TEST_CASE("strided and padded conv matches direct correlation") {
  const T x = random_tensor({2, 3, 7, 6}, 2);
  const T w = random_tensor({4, 3, 3, 3}, 3);
  for (auto [s, p, d] : {std::tuple{1, 1, 1}, std::tuple{2, 1, 1}, std::tuple{1, 3, 3}, std::tuple{2, 0, 1}}) {
    const T y = ad::conv2d(x, w, {s, p, d});
    const auto oracle = direct_conv(x, w, s, p, d);
    REQUIRE(y.numel() == static_cast<std::int64_t>(oracle.size()));
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(y.data()[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
  }
}

TEST_CASE("stride-2 transposed conv doubles spatial dims") {
  const T x = random_tensor({1, 4, 5, 7}, 4);
  const T w = random_tensor({4, 2, 4, 4}, 5);
  const T y = ad::conv2d_transpose(x, w, {2, 1, 1}, 10, 14);
  CHECK(y.shape() == ad::Shape{1, 2, 10, 14});
  // Shape formula: the forward conv maps 2h back to h.
  CHECK(ad::conv_out_size(10, 4, {2, 1, 1}) == 5);
  CHECK_THROWS_AS(ad::conv2d_transpose(x, w, {2, 1, 1}, 13, 14), InvalidArgument);
}

TEST_CASE("transposed conv is the adjoint of conv") {
  const T x = random_tensor({2, 3, 6, 6}, 6, false);
  const T w = random_tensor({4, 3, 3, 3}, 7, false);
  const T y = random_tensor({2, 4, 3, 3}, 8, false);
  const double lhs = ad::sum(ad::mul(ad::conv2d(x, w, {2, 1, 1}), y)).item();
  const double rhs = ad::sum(ad::mul(x, ad::conv2d_transpose(y, w, {2, 1, 1}, 6, 6))).item();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gradient of sum(x^2) is exactly 2x") {
  const T x = random_tensor({3, 4}, 9);
  const auto g = ad::grad(ad::sum_sq(x), {x});
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(g[0].data()[i] == 2.0 * x.data()[i]);
}

TEST_CASE("double backward of ||d(w.x)/dx||^2 with respect to w is 2w") {
  const T w = random_tensor({5, 1}, 10);
  const T x = random_tensor({1, 5}, 11);
  const T y = ad::sum(ad::matmul(x, w));
  const T gx = ad::grad(y, {x}, /*create_graph=*/true)[0];
  const T g2 = ad::grad(ad::sum_sq(gx), {w})[0];
  for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(g2.data()[i] == 2.0 * w.data()[i]);
}

TEST_CASE("grad rejects non-scalar outputs and reports shapes on mismatch") {
  const T x = random_tensor({3, 4}, 12);
  CHECK_THROWS_AS(ad::grad(ad::mul(x, x), {x}), InvalidArgument);
  const T y = random_tensor({4, 3}, 13);
  try {
    (void)ad::add(x, y);
    FAIL("expected a shape error");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3,4]") != std::string::npos);
    CHECK(msg.find("[4,3]") != std::string::npos);
  }
}

TEST_CASE("unreachable inputs get zero gradients and no-grad mode records nothing") {
  const T x = random_tensor({2}, 14);
  const T unused = random_tensor({3}, 15);
  const auto g = ad::grad(ad::sum_sq(x), {x, unused});
  CHECK(g[1].shape() == unused.shape());
  for (double v : g[1].data()) CHECK(v == 0.0);
  ad::NoGradGuard guard;
  CHECK_FALSE(ad::mul(x, x).requires_grad());
}

TEST_CASE("first-order gradients of a primitive match finite differences") {
  const ad::ScalarFn fn = [](const std::vector<T>& in) {
    return ad::sum(ad::sigmoid(ad::conv2d(in[0], in[1], {1, 1, 1})));
  };
  CHECK(ad::check_gradient(fn, {random_tensor({1, 2, 4, 4}, 16), random_tensor({2, 2, 3, 3}, 17)}) < 1e-6);
}

TEST_CASE("full gradcheck suite passes") {
  const auto results = ad::run_gradcheck_suite();
  CHECK(results.size() > 40);
  for (const auto& r : results) {
    INFO(r.name << " rel err " << r.max_rel_error);
    CHECK(r.passed());
  }
}

TEST_CASE("first_nonfinite names the offending op") {
  const T x = T::variable({2}, {1.0, -1.0});
  const T y = ad::sqrt(x);
  CHECK(ad::first_nonfinite(ad::sum(y)).find("sqrt") == 0);
  CHECK(ad::first_nonfinite(ad::sum(x)).empty());
}

TEST_CASE("adam: zero gradient leaves parameters unchanged and counts the step") {
  ad::AdamState<double> state;
  CHECK(state.lr == 2e-4);
  CHECK(state.beta1 == 0.9);
  CHECK(state.beta2 == 0.999);
  CHECK(state.eps == 1e-8);
  T p = T::variable({3}, {1.0, -2.0, 0.5});
  ad::adam_step(state, {p}, {T::zeros({3})});
  CHECK(state.step == 1);
  CHECK(p.data()[0] == 1.0);
  CHECK(p.data()[1] == -2.0);
  CHECK(p.data()[2] == 0.5);
}

TEST_CASE("adam: constant gradient converges to lr * sign(g) steps") {
  // With a constant gradient the bias-corrected moments are exactly g and g^2,
  // so each update is lr * g / (|g| + eps).
  ad::AdamState<double> state;
  const std::vector<double> g{0.3, -4.0};
  T p = T::variable({2}, {0.0, 0.0});
  std::vector<double> expected{0.0, 0.0};
  for (int i = 0; i < 1000; ++i) {
    ad::adam_step(state, {p}, {T::from({2}, g)});
    for (int k = 0; k < 2; ++k) expected[k] -= state.lr * g[k] / (std::abs(g[k]) + state.eps);
  }
  for (int k = 0; k < 2; ++k) CHECK(p.data()[k] == doctest::Approx(expected[k]).epsilon(1e-9));
  const double last_step = state.lr * std::abs(g[0]) / (std::abs(g[0]) + state.eps);
  CHECK(last_step == doctest::Approx(state.lr).epsilon(1e-6));
}

TEST_CASE("adam rejects mismatched shapes") {
  ad::AdamState<double> state;
  T p = T::variable({3}, {1, 2, 3});
  CHECK_THROWS_AS(ad::adam_step(state, {p}, {T::zeros({2})}), InvalidArgument);
}

TEST_CASE("checkpoint container round trip and corruption") {
  TensorTable table;
  table["gen/00/w"] = {{2, 1, 3, 3}, std::vector<float>(18, 0.25f)};
  table["gen/00/b"] = {{2}, {1.5f, -0.0f}};
  table["scalar"] = {{}, {3.0f}};
  const auto bytes = encode_checkpoint(table);
  CHECK(decode_checkpoint(bytes) == table);

  auto corrupt = bytes;
  corrupt[0] = 'X';
  try {
    (void)decode_checkpoint(corrupt);
    FAIL("expected format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);

  const auto path = (std::filesystem::temp_directory_path() / "sketchfill_ckpt_test.fsck").string();
  write_checkpoint(path, table);
  CHECK(read_checkpoint(path) == table);
  CHECK(checkpoint_hash(path).size() == 16);
  std::filesystem::remove(path);
}
