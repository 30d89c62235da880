#include "sketchfill/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sketchfill/error.hpp"
#include "sketchfill/model.hpp"

namespace sketchfill::ad {

using T = Tensor<double>;

double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) throw InvalidArgument("relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace {

std::vector<T> with_value(const std::vector<T>& inputs, std::size_t which, std::size_t k, double delta) {
  std::vector<T> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double> v(inputs[i].data().begin(), inputs[i].data().end());
    if (i == which) v[k] += delta;
    out.push_back(T::variable(inputs[i].shape(), std::move(v)));
  }
  return out;
}

std::vector<double> flatten(const std::vector<T>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

std::vector<std::vector<double>> numeric_gradient(const ScalarFn& fn, const std::vector<T>& inputs, double h) {
  std::vector<std::vector<double>> out;
  NoGradGuard guard;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double> g(static_cast<std::size_t>(inputs[i].numel()));
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double fp = fn(with_value(inputs, i, k, h)).item();
      const double fm = fn(with_value(inputs, i, k, -h)).item();
      g[k] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

double check_gradient(const ScalarFn& fn, const std::vector<T>& inputs, double h) {
  const auto analytic = flatten(grad(fn(inputs), inputs));
  std::vector<double> numeric;
  for (auto& g : numeric_gradient(fn, inputs, h)) numeric.insert(numeric.end(), g.begin(), g.end());
  return relative_error(analytic, numeric);
}

double check_second_order(const ScalarFn& fn, const std::vector<T>& inputs, std::uint64_t seed, double h) {
  if (inputs.size() < 2) throw InvalidArgument("check_second_order: need [x, params...]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> r(static_cast<std::size_t>(inputs[0].numel()));
  for (auto& v : r) v = nd(rng);
  const T probe = T::from(inputs[0].shape(), r);

  // h(x, p) = <probe, d fn / d x>
  const ScalarFn inner = [&](const std::vector<T>& in) {
    const T gx = grad(fn(in), {in[0]}, /*create_graph=*/true)[0];
    return sum(mul(gx, probe));
  };
  std::vector<T> params(inputs.begin() + 1, inputs.end());
  const T hval = inner(inputs);
  const auto analytic = flatten(grad(hval, params));

  std::vector<double> numeric;
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    for (std::int64_t k = 0; k < inputs[i].numel(); ++k) {
      const double fp = inner(with_value(inputs, i, static_cast<std::size_t>(k), h)).item();
      const double fm = inner(with_value(inputs, i, static_cast<std::size_t>(k), -h)).item();
      numeric.push_back((fp - fm) / (2.0 * h));
    }
  }
  return relative_error(analytic, numeric);
}

// ---------------------------------------------------------------------------
// Suite

namespace {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  T normal(const Shape& shape) {
    std::normal_distribution<double> nd;
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = nd(rng_);
    return T::variable(shape, std::move(v));
  }
  /// Values with |v| >= margin, keeping finite differences away from kinks.
  T away_from_zero(const Shape& shape, double margin = 0.1) {
    std::uniform_real_distribution<double> ud(margin, 1.5);
    std::bernoulli_distribution sign;
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = sign(rng_) ? ud(rng_) : -ud(rng_);
    return T::variable(shape, std::move(v));
  }
  T positive(const Shape& shape) {
    std::uniform_real_distribution<double> ud(0.5, 2.0);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = ud(rng_);
    return T::variable(shape, std::move(v));
  }
  T constant(const Shape& shape) { return normal(shape).detach(); }

 private:
  std::mt19937_64 rng_;
};

/// sum(op(inputs) * weights): exercises every entry of the Jacobian.
ScalarFn weighted(std::function<T(const std::vector<T>&)> op, const T& weights) {
  return [op, weights](const std::vector<T>& in) { return sum(mul(op(in), weights)); };
}

// Six conv layers mixing stride, dilation, LRN, a transposed conv, a skip
// concatenation and a crop.
T six_layer_net(const std::vector<T>& in) {
  const T& x = in[0];
  auto layer = [&](const T& h, std::size_t i, ConvGeom g) {
    return leaky_relu(add_channel_bias(conv2d(h, in[i], g), in[i + 1]), 0.2);
  };
  const T h1 = layer(x, 1, {1, 1, 1});
  const T h2 = lrn(layer(h1, 3, {2, 1, 1}));
  const T h3 = layer(h2, 5, {1, 2, 2});
  const T h4 = leaky_relu(add_channel_bias(conv2d_transpose(h3, in[7], {2, 1, 1}, 8, 8), in[8]), 0.2);
  const T h5 = layer(concat<double>({h4, h1}), 9, {1, 1, 1});
  const T h6 = add_channel_bias(conv2d(crop(h5, {{1, 2}, {3, 0}}, 5, 5), in[11], {1, 1, 1}), in[12]);
  return mean(square(h6));
}

std::vector<T> six_layer_inputs(Gen& gen) {
  return {gen.normal({2, 2, 8, 8}),
          gen.normal({3, 2, 3, 3}), gen.normal({3}),
          gen.normal({4, 3, 3, 3}), gen.normal({4}),
          gen.normal({4, 4, 3, 3}), gen.normal({4}),
          gen.normal({4, 3, 4, 4}), gen.normal({3}),
          gen.normal({3, 6, 3, 3}), gen.normal({3}),
          gen.normal({2, 3, 3, 3}), gen.normal({2})};
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  Gen gen(seed);
  std::vector<GradCheckResult> results;
  constexpr double kFirst = 1e-4;
  constexpr double kSecond = 1e-3;
  auto first = [&](const std::string& name, std::function<T(const std::vector<T>&)> op, std::vector<T> inputs) {
    const T out = [&] {
      NoGradGuard g;
      return op(inputs);
    }();
    const ScalarFn fn = out.rank() == 0 ? ScalarFn(op) : weighted(op, gen.constant(out.shape()));
    results.push_back({name, check_gradient(fn, inputs), kFirst});
  };
  auto second = [&](const std::string& name, std::function<T(const std::vector<T>&)> op, std::vector<T> inputs) {
    const T out = [&] {
      NoGradGuard g;
      return op(inputs);
    }();
    // Square the weighted output so every op has a non-trivial second derivative.
    const T weights = gen.constant(out.shape());
    const ScalarFn fn = [op, weights](const std::vector<T>& in) { return sum_sq(mul(op(in), weights)); };
    results.push_back({name, check_second_order(fn, inputs, seed + results.size()), kSecond});
  };

  first("conv2d", [](const std::vector<T>& in) { return conv2d(in[0], in[1], {1, 1, 1}); },
        {gen.normal({2, 3, 5, 5}), gen.normal({4, 3, 3, 3})});
  first("conv2d/strided", [](const std::vector<T>& in) { return conv2d(in[0], in[1], {2, 1, 1}); },
        {gen.normal({2, 2, 6, 6}), gen.normal({3, 2, 3, 3})});
  first("conv2d/dilated", [](const std::vector<T>& in) { return conv2d(in[0], in[1], {1, 2, 2}); },
        {gen.normal({1, 2, 7, 7}), gen.normal({2, 2, 3, 3})});
  first("conv2d_transpose", [](const std::vector<T>& in) { return conv2d_transpose(in[0], in[1], {2, 1, 1}, 6, 6); },
        {gen.normal({2, 3, 3, 3}), gen.normal({3, 2, 4, 4})});
  first("conv2d_weight_grad",
        [](const std::vector<T>& in) { return conv2d_weight_grad(in[0], in[1], {1, 1, 1}, 3, 3); },
        {gen.normal({2, 2, 4, 4}), gen.normal({2, 3, 4, 4})});
  first("matmul", [](const std::vector<T>& in) { return matmul(in[0], in[1]); },
        {gen.normal({3, 4}), gen.normal({4, 2})});
  first("transpose", [](const std::vector<T>& in) { return transpose(in[0]); }, {gen.normal({3, 5})});
  first("concat", [](const std::vector<T>& in) { return concat<double>({in[0], in[1]}); },
        {gen.normal({2, 2, 3, 3}), gen.normal({2, 3, 3, 3})});
  first("slice", [](const std::vector<T>& in) { return slice(in[0], 1, 3); }, {gen.normal({2, 4, 3, 3})});
  first("pad_channels", [](const std::vector<T>& in) { return pad_channels(in[0], 1, 5); },
        {gen.normal({2, 2, 3, 3})});
  first("reshape", [](const std::vector<T>& in) { return reshape(in[0], {6, 4}); }, {gen.normal({2, 3, 4})});
  first("add", [](const std::vector<T>& in) { return add(in[0], in[1]); }, {gen.normal({3, 4}), gen.normal({3, 4})});
  first("sub", [](const std::vector<T>& in) { return sub(in[0], in[1]); }, {gen.normal({3, 4}), gen.normal({3, 4})});
  first("mul", [](const std::vector<T>& in) { return mul(in[0], in[1]); }, {gen.normal({3, 4}), gen.normal({3, 4})});
  first("div", [](const std::vector<T>& in) { return div(in[0], in[1]); },
        {gen.normal({3, 4}), gen.positive({3, 4})});
  first("scale", [](const std::vector<T>& in) { return scale(in[0], -2.5); }, {gen.normal({3, 4})});
  first("add_scalar", [](const std::vector<T>& in) { return add_scalar(in[0], 0.7); }, {gen.normal({3, 4})});
  first("leaky_relu", [](const std::vector<T>& in) { return leaky_relu(in[0], 0.2); },
        {gen.away_from_zero({3, 4})});
  first("abs", [](const std::vector<T>& in) { return abs(in[0]); }, {gen.away_from_zero({3, 4})});
  first("sqrt", [](const std::vector<T>& in) { return sqrt(in[0]); }, {gen.positive({3, 4})});
  first("square", [](const std::vector<T>& in) { return square(in[0]); }, {gen.normal({3, 4})});
  first("sigmoid", [](const std::vector<T>& in) { return sigmoid(in[0]); }, {gen.normal({3, 4})});
  first("softplus", [](const std::vector<T>& in) { return softplus(in[0]); }, {gen.normal({3, 4})});
  first("clamp", [](const std::vector<T>& in) { return clamp(in[0], -0.05, 0.05); }, {gen.away_from_zero({3, 4})});
  first("clamp/inside", [](const std::vector<T>& in) { return clamp(in[0], -2.0, 2.0); },
        {gen.away_from_zero({3, 4}, 0.1)});
  first("sum", [](const std::vector<T>& in) { return sum(square(in[0])); }, {gen.normal({2, 3, 2})});
  first("mean", [](const std::vector<T>& in) { return mean(square(in[0])); }, {gen.normal({2, 3, 2})});
  first("sum_sq", [](const std::vector<T>& in) { return sum_sq(in[0]); }, {gen.normal({2, 3, 2})});
  first("sum_to", [](const std::vector<T>& in) { return sum_to(in[0], {2, 1, 3, 1}); }, {gen.normal({2, 4, 3, 2})});
  first("broadcast_to", [](const std::vector<T>& in) { return broadcast_to(in[0], {2, 4, 3, 2}); },
        {gen.normal({2, 1, 3, 1})});
  first("crop", [](const std::vector<T>& in) { return crop(in[0], {{0, 1}, {2, 0}}, 3, 3); },
        {gen.normal({2, 2, 5, 5})});
  first("uncrop", [](const std::vector<T>& in) { return uncrop(in[0], {{0, 1}, {2, 0}}, 5, 5); },
        {gen.normal({2, 2, 3, 3})});
  first("add_channel_bias", [](const std::vector<T>& in) { return add_channel_bias(in[0], in[1]); },
        {gen.normal({2, 3, 2, 2}), gen.normal({3})});
  first("lrn", [](const std::vector<T>& in) { return lrn(in[0]); }, {gen.normal({2, 4, 3, 3})});
  first("six_layer_net", six_layer_net, six_layer_inputs(gen));

  second("second_order/conv2d", [](const std::vector<T>& in) { return conv2d(in[0], in[1], {1, 1, 1}); },
         {gen.normal({1, 2, 4, 4}), gen.normal({2, 2, 3, 3})});
  second("second_order/conv2d_transpose",
         [](const std::vector<T>& in) { return conv2d_transpose(in[0], in[1], {2, 1, 1}, 4, 4); },
         {gen.normal({1, 2, 2, 2}), gen.normal({2, 2, 4, 4})});
  second("second_order/conv2d_weight_grad",
         [](const std::vector<T>& in) { return conv2d_weight_grad(in[0], in[1], {1, 1, 1}, 3, 3); },
         {gen.normal({1, 2, 4, 4}), gen.normal({1, 2, 4, 4})});
  second("second_order/matmul", [](const std::vector<T>& in) { return matmul(in[0], in[1]); },
         {gen.normal({3, 4}), gen.normal({4, 2})});
  second("second_order/div", [](const std::vector<T>& in) { return div(in[0], in[1]); },
         {gen.normal({3, 4}), gen.positive({3, 4})});
  second("second_order/sqrt", [](const std::vector<T>& in) { return sqrt(add(mul(in[0], in[0]), in[1])); },
         {gen.normal({3, 4}), gen.positive({3, 4})});
  second("second_order/sigmoid", [](const std::vector<T>& in) { return sigmoid(mul(in[0], in[1])); },
         {gen.normal({3, 4}), gen.normal({3, 4})});
  second("second_order/softplus", [](const std::vector<T>& in) { return softplus(mul(in[0], in[1])); },
         {gen.normal({3, 4}), gen.normal({3, 4})});
  second("second_order/lrn", [](const std::vector<T>& in) { return lrn(mul(in[0], in[1])); },
         {gen.normal({1, 3, 2, 2}), gen.normal({1, 3, 2, 2})});
  second("second_order/leaky_relu_conv",
         [](const std::vector<T>& in) { return leaky_relu(conv2d(in[0], in[1], {1, 1, 1}), 0.2); },
         {gen.normal({1, 2, 4, 4}), gen.normal({2, 2, 3, 3})});
  {
    // Gradient-penalty shape: || d net / d x || composed with sqrt, differentiated w.r.t. params.
    auto inputs = six_layer_inputs(gen);
    const ScalarFn fn = six_layer_net;
    results.push_back({"second_order/six_layer_net", check_second_order(fn, inputs, seed + 99), kSecond});
  }
  return results;
}

}  // namespace sketchfill::ad
