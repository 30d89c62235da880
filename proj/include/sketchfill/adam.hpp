#pragma once

#include <cstdint>
#include <vector>

#include "sketchfill/autodiff.hpp"

namespace sketchfill::ad {

/// Moments for a fixed, ordered parameter list.
template <class Real>
struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
};

/// One bias-corrected ADAM update, in place on the leaf `params`.
template <class Real>
void adam_step(AdamState<Real>& state, const std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads);

}  // namespace sketchfill::ad
