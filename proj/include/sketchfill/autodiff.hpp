#pragma once

// Reverse-mode differentiable tensors.
//
// Every backward rule is written in terms of the public ops below, so when
// `grad(..., create_graph = true)` is used the returned gradients are graph
// nodes themselves and can be differentiated again (double backprop).
//
// Storage is `Real` (float for training, double for gradient checks). Both
// are explicitly instantiated in autodiff.cpp.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sketchfill::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Thread-local switch controlling whether ops record graph nodes.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class Real>
class Tensor;

template <class Real>
using BackwardFn = std::function<std::vector<Tensor<Real>>(const Tensor<Real>& grad_out)>;

template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<Tensor<Real>> parents;
  BackwardFn<Real> backward;
};

template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Real value);
  static Tensor from(Shape shape, std::vector<Real> values);
  static Tensor scalar(Real value);
  /// Leaf that gradients are taken with respect to.
  static Tensor variable(Shape shape, std::vector<Real> values);

  /// Internal constructor used by ops. Records `parents`/`backward` only when
  /// grad mode is on and some parent requires grad.
  static Tensor make(Shape shape, std::vector<Real> values, std::string op, std::vector<Tensor> parents,
                     BackwardFn<Real> backward);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  std::span<const Real> data() const { return node_->value; }
  /// Leaves only; used by optimizers and initializers.
  std::span<Real> mutable_data();
  Real item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool is_leaf() const noexcept { return node_ && node_->parents.empty(); }
  const std::string& op() const { return node_->op; }
  const Node<Real>* node() const noexcept { return node_.get(); }

  /// Copy of the value with no history.
  Tensor detach() const;
  Tensor& set_requires_grad(bool on);

 private:
  std::shared_ptr<Node<Real>> node_;
};

struct ConvGeom {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

/// Output extent of a convolution along one axis.
std::int64_t conv_out_size(std::int64_t in, int kernel, const ConvGeom& g);

// x [N,C,H,W], w [O,C,kh,kw] -> [N,O,Ho,Wo]
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, ConvGeom geom);
// Adjoint of conv2d in its input: x [N,O,Ho,Wo], w [O,C,kh,kw] -> [N,C,out_h,out_w].
template <class Real>
Tensor<Real> conv2d_transpose(const Tensor<Real>& x, const Tensor<Real>& w, ConvGeom geom, std::int64_t out_h,
                              std::int64_t out_w);
// Adjoint of conv2d in its weights: x [N,C,H,W], gy [N,O,Ho,Wo] -> [O,C,kh,kw].
template <class Real>
Tensor<Real> conv2d_weight_grad(const Tensor<Real>& x, const Tensor<Real>& gy, ConvGeom geom, int kh, int kw);

// [M,K] x [K,N]
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a);

/// Concatenate along axis 1 (channels for NCHW, features for [N,F]).
template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts);
/// x[:, begin:end, ...]
template <class Real>
Tensor<Real> slice(const Tensor<Real>& x, std::int64_t begin, std::int64_t end);
/// Embed x as channels [begin, begin + x.dim(1)) of a zero tensor with `total` channels.
template <class Real>
Tensor<Real> pad_channels(const Tensor<Real>& x, std::int64_t begin, std::int64_t total);

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> scale(const Tensor<Real>& x, double factor);
template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, double value);

template <class Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, double slope);
template <class Real>
Tensor<Real> abs(const Tensor<Real>& x);
template <class Real>
Tensor<Real> sqrt(const Tensor<Real>& x);
template <class Real>
Tensor<Real> square(const Tensor<Real>& x);
template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& x);
/// log(1 + exp(x)), computed stably.
template <class Real>
Tensor<Real> softplus(const Tensor<Real>& x);
template <class Real>
Tensor<Real> clamp(const Tensor<Real>& x, double lo, double hi);

/// Scalar (rank 0) reductions.
template <class Real>
Tensor<Real> sum(const Tensor<Real>& x);
template <class Real>
Tensor<Real> mean(const Tensor<Real>& x);
template <class Real>
Tensor<Real> sum_sq(const Tensor<Real>& x);

/// Sum over the axes where `shape` has extent 1 (same rank as x).
template <class Real>
Tensor<Real> sum_to(const Tensor<Real>& x, const Shape& shape);
/// Replicate along the axes where x has extent 1.
template <class Real>
Tensor<Real> broadcast_to(const Tensor<Real>& x, const Shape& shape);

struct CropOrigin {
  std::int64_t y = 0;
  std::int64_t x = 0;
};

/// Per-sample spatial crop of [N,C,H,W] to [N,C,h,w]; origins.size() == N.
template <class Real>
Tensor<Real> crop(const Tensor<Real>& x, const std::vector<CropOrigin>& origins, std::int64_t h, std::int64_t w);
/// Adjoint of crop: zero-embed [N,C,h,w] into [N,C,H,W].
template <class Real>
Tensor<Real> uncrop(const Tensor<Real>& x, const std::vector<CropOrigin>& origins, std::int64_t H, std::int64_t W);

/// x [N,C,H,W] + b [C]
template <class Real>
Tensor<Real> add_channel_bias(const Tensor<Real>& x, const Tensor<Real>& b);

/// d output / d inputs for a scalar `output`. With `create_graph` the result is
/// differentiable. Inputs the output does not depend on get zero gradients.
template <class Real>
std::vector<Tensor<Real>> grad(const Tensor<Real>& output, const std::vector<Tensor<Real>>& inputs,
                               bool create_graph = false);

/// Walks the graph behind `root` from leaves upward and describes the first
/// node holding a NaN/Inf value ("op [shape]"), or returns an empty string.
template <class Real>
std::string first_nonfinite(const Tensor<Real>& root);

}  // namespace sketchfill::ad
