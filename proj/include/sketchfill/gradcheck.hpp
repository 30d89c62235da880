#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sketchfill/autodiff.hpp"

namespace sketchfill::ad {

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Elementwise |a - n| / max(|a|, |n|, floor), maximized. Entries far below
/// `floor` are effectively compared in absolute terms.
double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor = 1e-3);

/// Central differences of `fn` w.r.t. every element of every input, step h.
std::vector<std::vector<double>> numeric_gradient(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs,
                                                  double h = 1e-5);

/// Max relative error between reverse-mode and central-difference gradients.
double check_gradient(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs, double h = 1e-5);

/// Second-order check. With q(x, p) = fn(inputs) and inputs = [x, p...], builds
/// h(p) = sum(r * dq/dx) by a create-graph backward and compares its reverse-mode
/// gradient w.r.t. p against central differences of h.
double check_second_order(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs, std::uint64_t seed,
                          double h = 1e-5);

/// Finite-difference suite over every primitive, a six-layer mixed network and
/// second-order (backward-of-backward) checks.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 1234);

}  // namespace sketchfill::ad
