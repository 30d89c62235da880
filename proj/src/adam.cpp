#include "sketchfill/adam.hpp"

#include <cmath>

#include "sketchfill/error.hpp"

namespace sketchfill::ad {

template <class Real>
void adam_step(AdamState<Real>& state, const std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads) {
  if (params.size() != grads.size())
    throw InvalidArgument("adam_step: " + std::to_string(params.size()) + " params but " +
                          std::to_string(grads.size()) + " gradients");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.numel()), Real(0));
      state.v.emplace_back(static_cast<std::size_t>(p.numel()), Real(0));
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam_step: parameter list changed size");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != grads[i].shape() || static_cast<std::int64_t>(state.m[i].size()) != params[i].numel())
      throw InvalidArgument("adam_step: shape mismatch " + shape_str(params[i].shape()) + " vs " +
                            shape_str(grads[i].shape()));

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Real> p = params[i];
    auto value = p.mutable_data();
    auto g = grads[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<Real>(state.beta1 * m[k] + (1.0 - state.beta1) * gk);
      v[k] = static_cast<Real>(state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      value[k] = static_cast<Real>(value[k] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template void adam_step(AdamState<float>&, const std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&);
template void adam_step(AdamState<double>&, const std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&);

}  // namespace sketchfill::ad
