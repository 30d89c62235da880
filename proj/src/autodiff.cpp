#include "sketchfill/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "sketchfill/error.hpp"

namespace sketchfill::ad {

namespace {

thread_local bool g_grad_enabled = true;

template <class Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MapMat = Eigen::Map<RowMat<Real>>;
template <class Real>
using CMapMat = Eigen::Map<const RowMat<Real>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

template <class Real>
void require_same(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined operand");
  if (a.shape() != b.shape())
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

template <class Real>
void require_rank(const Tensor<Real>& a, int rank, const char* op) {
  require(a.defined(), std::string(op) + ": undefined operand");
  if (a.rank() != rank)
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                          shape_str(a.shape()));
}

struct ConvDims {
  std::int64_t n, c, h, w;   // input
  std::int64_t o, kh, kw;    // kernel
  std::int64_t ho, wo;       // output
  std::int64_t ck() const { return c * kh * kw; }
  std::int64_t hw_out() const { return ho * wo; }
};

// cols[(c*kh + i)*kw + j][oy*wo + ox] = x[c][oy*s - p + i*d][ox*s - p + j*d]
template <class Real>
void im2col(const Real* x, const ConvDims& d, const ConvGeom& g, Real* cols) {
  for (std::int64_t c = 0; c < d.c; ++c)
    for (std::int64_t i = 0; i < d.kh; ++i)
      for (std::int64_t j = 0; j < d.kw; ++j) {
        Real* row = cols + ((c * d.kh + i) * d.kw + j) * d.hw_out();
        const Real* xc = x + c * d.h * d.w;
        for (std::int64_t oy = 0; oy < d.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + i * g.dilation;
          Real* dst = row + oy * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.wo, Real(0));
            continue;
          }
          const Real* src = xc + iy * d.w;
          for (std::int64_t ox = 0; ox < d.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + j * g.dilation;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : Real(0);
          }
        }
      }
}

template <class Real>
void col2im(const Real* cols, const ConvDims& d, const ConvGeom& g, Real* x) {
  for (std::int64_t c = 0; c < d.c; ++c)
    for (std::int64_t i = 0; i < d.kh; ++i)
      for (std::int64_t j = 0; j < d.kw; ++j) {
        const Real* row = cols + ((c * d.kh + i) * d.kw + j) * d.hw_out();
        Real* xc = x + c * d.h * d.w;
        for (std::int64_t oy = 0; oy < d.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + i * g.dilation;
          if (iy < 0 || iy >= d.h) continue;
          const Real* src = row + oy * d.wo;
          Real* dst = xc + iy * d.w;
          for (std::int64_t ox = 0; ox < d.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + j * g.dilation;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
}

template <class Real>
std::vector<Real> conv_forward_kernel(const std::vector<Real>& x, const std::vector<Real>& w, const ConvDims& d,
                                      const ConvGeom& g) {
  std::vector<Real> out(static_cast<std::size_t>(d.n * d.o * d.hw_out()));
  std::vector<Real> cols(static_cast<std::size_t>(d.ck() * d.hw_out()));
  CMapMat<Real> wm(w.data(), d.o, d.ck());
  for (std::int64_t n = 0; n < d.n; ++n) {
    im2col(x.data() + n * d.c * d.h * d.w, d, g, cols.data());
    CMapMat<Real> cm(cols.data(), d.ck(), d.hw_out());
    MapMat<Real> om(out.data() + n * d.o * d.hw_out(), d.o, d.hw_out());
    om.noalias() = wm * cm;
  }
  return out;
}

template <class Real>
std::vector<Real> conv_input_grad_kernel(const std::vector<Real>& gy, const std::vector<Real>& w, const ConvDims& d,
                                         const ConvGeom& g) {
  std::vector<Real> out(static_cast<std::size_t>(d.n * d.c * d.h * d.w), Real(0));
  std::vector<Real> cols(static_cast<std::size_t>(d.ck() * d.hw_out()));
  CMapMat<Real> wm(w.data(), d.o, d.ck());
  for (std::int64_t n = 0; n < d.n; ++n) {
    CMapMat<Real> gm(gy.data() + n * d.o * d.hw_out(), d.o, d.hw_out());
    MapMat<Real> cm(cols.data(), d.ck(), d.hw_out());
    cm.noalias() = wm.transpose() * gm;
    col2im(cols.data(), d, g, out.data() + n * d.c * d.h * d.w);
  }
  return out;
}

template <class Real>
std::vector<Real> conv_weight_grad_kernel(const std::vector<Real>& x, const std::vector<Real>& gy, const ConvDims& d,
                                          const ConvGeom& g) {
  std::vector<Real> out(static_cast<std::size_t>(d.o * d.ck()), Real(0));
  std::vector<Real> cols(static_cast<std::size_t>(d.ck() * d.hw_out()));
  MapMat<Real> om(out.data(), d.o, d.ck());
  for (std::int64_t n = 0; n < d.n; ++n) {
    im2col(x.data() + n * d.c * d.h * d.w, d, g, cols.data());
    CMapMat<Real> cm(cols.data(), d.ck(), d.hw_out());
    CMapMat<Real> gm(gy.data() + n * d.o * d.hw_out(), d.o, d.hw_out());
    om.noalias() += gm * cm.transpose();
  }
  return out;
}

template <class Real>
std::vector<Real> values_of(const Tensor<Real>& t) {
  return {t.data().begin(), t.data().end()};
}

template <class Real, class F>
Tensor<Real> unary(const Tensor<Real>& x, const char* op, F f, BackwardFn<Real> backward) {
  require(x.defined(), std::string(op) + ": undefined operand");
  std::vector<Real> out(static_cast<std::size_t>(x.numel()));
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor<Real>::make(x.shape(), std::move(out), op, {x}, std::move(backward));
}

// Strides of `shape` with zero stride on broadcast (extent 1) axes of `small`.
std::vector<std::int64_t> broadcast_strides(const Shape& small) {
  std::vector<std::int64_t> strides(small.size(), 0);
  std::int64_t s = 1;
  for (std::size_t i = small.size(); i-- > 0;) {
    strides[i] = small[i] == 1 ? 0 : s;
    s *= small[i];
  }
  return strides;
}

void check_broadcastable(const Shape& small, const Shape& big, const char* op) {
  bool ok = small.size() == big.size();
  for (std::size_t i = 0; ok && i < small.size(); ++i) ok = small[i] == big[i] || small[i] == 1;
  if (!ok) throw InvalidArgument(std::string(op) + ": cannot broadcast " + shape_str(small) + " to " + shape_str(big));
}

// Calls f(big_index, small_index) for every element of `big`.
template <class F>
void for_each_broadcast(const Shape& small, const Shape& big, F f) {
  const auto strides = broadcast_strides(small);
  const std::size_t rank = big.size();
  std::vector<std::int64_t> idx(rank, 0);
  const std::int64_t total = numel(big);
  std::int64_t small_off = 0;
  for (std::int64_t i = 0; i < total; ++i) {
    f(i, small_off);
    for (std::size_t a = rank; a-- > 0;) {
      ++idx[a];
      small_off += strides[a];
      if (idx[a] < big[a]) break;
      small_off -= strides[a] * idx[a];
      idx[a] = 0;
    }
  }
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << "]";
  return out.str();
}

bool GradMode::enabled() noexcept { return g_grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { g_grad_enabled = on; }

std::int64_t conv_out_size(std::int64_t in, int kernel, const ConvGeom& g) {
  return (in + 2 * g.pad - g.dilation * (kernel - 1) - 1) / g.stride + 1;
}

// ---------------------------------------------------------------------------
// Tensor

template <class Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape) {
  return full(std::move(shape), Real(0));
}

template <class Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value) {
  const auto n = static_cast<std::size_t>(ad::numel(shape));
  return from(std::move(shape), std::vector<Real>(n, value));
}

template <class Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> values) {
  for (auto d : shape) require(d >= 0, "negative extent in shape " + shape_str(shape));
  if (static_cast<std::int64_t>(values.size()) != ad::numel(shape))
    throw InvalidArgument("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                          shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<Node<Real>>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(values);
  return t;
}

template <class Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return from({}, {value});
}

template <class Real>
Tensor<Real> Tensor<Real>::variable(Shape shape, std::vector<Real> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <class Real>
Tensor<Real> Tensor<Real>::make(Shape shape, std::vector<Real> values, std::string op, std::vector<Tensor> parents,
                                BackwardFn<Real> backward) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->op = std::move(op);
  if (GradMode::enabled() &&
      std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); })) {
    t.node_->requires_grad = true;
    t.node_->parents = std::move(parents);
    t.node_->backward = std::move(backward);
  }
  return t;
}

template <class Real>
std::span<Real> Tensor<Real>::mutable_data() {
  require(defined(), "mutable_data on undefined tensor");
  require(node_->parents.empty(), "mutable_data: only leaf tensors may be modified in place");
  return node_->value;
}

template <class Real>
Real Tensor<Real>::item() const {
  require(defined() && node_->value.size() == 1, "item: tensor is not a single element");
  return node_->value[0];
}

template <class Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from(node_->shape, node_->value);
}

template <class Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool on) {
  require(defined() && node_->parents.empty(), "set_requires_grad: only leaves");
  node_->requires_grad = on;
  return *this;
}

// ---------------------------------------------------------------------------
// Convolutions

template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, ConvGeom geom) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (x.dim(1) != w.dim(1))
    throw InvalidArgument("conv2d: input channels " + shape_str(x.shape()) + " do not match kernel " +
                          shape_str(w.shape()));
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0};
  d.ho = conv_out_size(d.h, static_cast<int>(d.kh), geom);
  d.wo = conv_out_size(d.w, static_cast<int>(d.kw), geom);
  require(d.ho > 0 && d.wo > 0, "conv2d: empty output for input " + shape_str(x.shape()));
  auto out = conv_forward_kernel(values_of(x), values_of(w), d, geom);
  const int kh = static_cast<int>(d.kh), kw = static_cast<int>(d.kw);
  const auto H = d.h, W = d.w;
  return Tensor<Real>::make({d.n, d.o, d.ho, d.wo}, std::move(out), "conv2d", {x, w},
                            [x, w, geom, kh, kw, H, W](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              Tensor<Real> gx, gw;
                              if (x.requires_grad()) gx = conv2d_transpose(g, w, geom, H, W);
                              if (w.requires_grad()) gw = conv2d_weight_grad(x, g, geom, kh, kw);
                              return {gx, gw};
                            });
}

template <class Real>
Tensor<Real> conv2d_transpose(const Tensor<Real>& x, const Tensor<Real>& w, ConvGeom geom, std::int64_t out_h,
                              std::int64_t out_w) {
  require_rank(x, 4, "conv2d_transpose");
  require_rank(w, 4, "conv2d_transpose");
  if (x.dim(1) != w.dim(0))
    throw InvalidArgument("conv2d_transpose: input channels " + shape_str(x.shape()) + " do not match kernel " +
                          shape_str(w.shape()));
  ConvDims d{x.dim(0), w.dim(1), out_h, out_w, w.dim(0), w.dim(2), w.dim(3), x.dim(2), x.dim(3)};
  if (conv_out_size(out_h, static_cast<int>(d.kh), geom) != d.ho ||
      conv_out_size(out_w, static_cast<int>(d.kw), geom) != d.wo)
    throw InvalidArgument("conv2d_transpose: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                          " inconsistent with input " + shape_str(x.shape()));
  auto out = conv_input_grad_kernel(values_of(x), values_of(w), d, geom);
  const int kh = static_cast<int>(d.kh), kw = static_cast<int>(d.kw);
  return Tensor<Real>::make({d.n, d.c, out_h, out_w}, std::move(out), "conv2d_transpose", {x, w},
                            [x, w, geom, kh, kw](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              Tensor<Real> gx, gw;
                              if (x.requires_grad()) gx = conv2d(g, w, geom);
                              if (w.requires_grad()) gw = conv2d_weight_grad(g, x, geom, kh, kw);
                              return {gx, gw};
                            });
}

template <class Real>
Tensor<Real> conv2d_weight_grad(const Tensor<Real>& x, const Tensor<Real>& gy, ConvGeom geom, int kh, int kw) {
  require_rank(x, 4, "conv2d_weight_grad");
  require_rank(gy, 4, "conv2d_weight_grad");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), gy.dim(1), kh, kw, gy.dim(2), gy.dim(3)};
  if (gy.dim(0) != d.n || conv_out_size(d.h, kh, geom) != d.ho || conv_out_size(d.w, kw, geom) != d.wo)
    throw InvalidArgument("conv2d_weight_grad: " + shape_str(x.shape()) + " and " + shape_str(gy.shape()) +
                          " are not a conv input/output pair");
  auto out = conv_weight_grad_kernel(values_of(x), values_of(gy), d, geom);
  const auto H = d.h, W = d.w;
  return Tensor<Real>::make({d.o, d.c, kh, kw}, std::move(out), "conv2d_weight_grad", {x, gy},
                            [x, gy, geom, H, W](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              Tensor<Real> gx, ggy;
                              if (x.requires_grad()) gx = conv2d_transpose(gy, g, geom, H, W);
                              if (gy.requires_grad()) ggy = conv2d(x, g, geom);
                              return {gx, ggy};
                            });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw InvalidArgument("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(m * n));
  MapMat<Real>(out.data(), m, n).noalias() = CMapMat<Real>(a.data().data(), m, k) * CMapMat<Real>(b.data().data(), k, n);
  return Tensor<Real>::make({m, n}, std::move(out), "matmul", {a, b},
                            [a, b](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              Tensor<Real> ga, gb;
                              if (a.requires_grad()) ga = matmul(g, transpose(b));
                              if (b.requires_grad()) gb = matmul(transpose(a), g);
                              return {ga, gb};
                            });
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  require_rank(a, 2, "transpose");
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(m * n));
  auto in = a.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return Tensor<Real>::make({n, m}, std::move(out), "transpose", {a},
                            [](const Tensor<Real>& g) -> std::vector<Tensor<Real>> { return {transpose(g)}; });
}

namespace {

// Extent of axis 0 and the contiguous block after axis 1.
template <class Real>
std::pair<std::int64_t, std::int64_t> outer_inner(const Tensor<Real>& t) {
  std::int64_t inner = 1;
  for (int i = 2; i < t.rank(); ++i) inner *= t.dim(i);
  return {t.dim(0), inner};
}

}  // namespace

template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts) {
  require(!parts.empty(), "concat: no operands");
  const Tensor<Real>& first = parts.front();
  require(first.defined() && first.rank() >= 2, "concat: operands need rank >= 2");
  Shape shape = first.shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    require(p.defined() && p.rank() == first.rank(), "concat: rank mismatch");
    for (int i = 0; i < p.rank(); ++i)
      if (i != 1 && p.dim(i) != first.dim(i))
        throw InvalidArgument("concat: shape mismatch " + shape_str(first.shape()) + " vs " + shape_str(p.shape()));
    total += p.dim(1);
  }
  shape[1] = total;
  const auto [outer, inner] = outer_inner(first);
  std::vector<Real> out(static_cast<std::size_t>(ad::numel(shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    auto src = p.data();
    const auto c = p.dim(1);
    for (std::int64_t n = 0; n < outer; ++n)
      std::copy_n(src.begin() + n * c * inner, c * inner, out.begin() + (n * total + off) * inner);
    off += p.dim(1);
  }
  return Tensor<Real>::make(std::move(shape), std::move(out), "concat", parts,
                            [parts, offsets](const Tensor<Real>& g) {
                              std::vector<Tensor<Real>> gs;
                              for (std::size_t i = 0; i < parts.size(); ++i)
                                gs.push_back(parts[i].requires_grad()
                                                 ? slice(g, offsets[i], offsets[i] + parts[i].dim(1))
                                                 : Tensor<Real>());
                              return gs;
                            });
}

template <class Real>
Tensor<Real> slice(const Tensor<Real>& x, std::int64_t begin, std::int64_t end) {
  require(x.defined() && x.rank() >= 2, "slice: operand needs rank >= 2");
  require(0 <= begin && begin < end && end <= x.dim(1),
          "slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " + shape_str(x.shape()));
  Shape shape = x.shape();
  const auto total = shape[1];
  shape[1] = end - begin;
  const auto [outer, inner] = outer_inner(x);
  std::vector<Real> out(static_cast<std::size_t>(ad::numel(shape)));
  auto src = x.data();
  for (std::int64_t n = 0; n < outer; ++n)
    std::copy_n(src.begin() + (n * total + begin) * inner, (end - begin) * inner,
                out.begin() + n * (end - begin) * inner);
  return Tensor<Real>::make(std::move(shape), std::move(out), "slice", {x},
                            [begin, total](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {pad_channels(g, begin, total)};
                            });
}

template <class Real>
Tensor<Real> pad_channels(const Tensor<Real>& x, std::int64_t begin, std::int64_t total) {
  require(x.defined() && x.rank() >= 2, "pad_channels: operand needs rank >= 2");
  const auto c = x.dim(1);
  require(begin >= 0 && begin + c <= total, "pad_channels: range outside target");
  Shape shape = x.shape();
  shape[1] = total;
  const auto [outer, inner] = outer_inner(x);
  std::vector<Real> out(static_cast<std::size_t>(ad::numel(shape)), Real(0));
  auto src = x.data();
  for (std::int64_t n = 0; n < outer; ++n)
    std::copy_n(src.begin() + n * c * inner, c * inner, out.begin() + (n * total + begin) * inner);
  return Tensor<Real>::make(std::move(shape), std::move(out), "pad_channels", {x},
                            [begin, c](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {slice(g, begin, begin + c)};
                            });
}

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  require(x.defined(), "reshape: undefined operand");
  if (ad::numel(shape) != x.numel())
    throw InvalidArgument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Shape original = x.shape();
  return Tensor<Real>::make(std::move(shape), values_of(x), "reshape", {x},
                            [original](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {reshape(g, original)};
                            });
}

// ---------------------------------------------------------------------------
// Elementwise

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same(a, b, "add");
  std::vector<Real> out(static_cast<std::size_t>(a.numel()));
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor<Real>::make(a.shape(), std::move(out), "add", {a, b},
                            [](const Tensor<Real>& g) -> std::vector<Tensor<Real>> { return {g, g}; });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same(a, b, "sub");
  std::vector<Real> out(static_cast<std::size_t>(a.numel()));
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Tensor<Real>::make(a.shape(), std::move(out), "sub", {a, b},
                            [b](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {g, b.requires_grad() ? scale(g, -1.0) : Tensor<Real>()};
                            });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same(a, b, "mul");
  std::vector<Real> out(static_cast<std::size_t>(a.numel()));
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor<Real>::make(a.shape(), std::move(out), "mul", {a, b},
                            [a, b](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {a.requires_grad() ? mul(g, b) : Tensor<Real>(),
                                      b.requires_grad() ? mul(g, a) : Tensor<Real>()};
                            });
}

template <class Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same(a, b, "div");
  std::vector<Real> out(static_cast<std::size_t>(a.numel()));
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  return Tensor<Real>::make(a.shape(), std::move(out), "div", {a, b},
                            [a, b](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              Tensor<Real> ga, gb;
                              if (a.requires_grad()) ga = div(g, b);
                              if (b.requires_grad()) gb = scale(div(mul(g, a), mul(b, b)), -1.0);
                              return {ga, gb};
                            });
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& x, double factor) {
  const Real f = static_cast<Real>(factor);
  return unary<Real>(x, "scale", [f](Real v) { return v * f; },
                     [factor](const Tensor<Real>& g) -> std::vector<Tensor<Real>> { return {scale(g, factor)}; });
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, double value) {
  const Real c = static_cast<Real>(value);
  return unary<Real>(x, "add_scalar", [c](Real v) { return v + c; },
                     [](const Tensor<Real>& g) -> std::vector<Tensor<Real>> { return {g}; });
}

namespace {

template <class Real, class F>
Tensor<Real> pointwise_factor(const Tensor<Real>& x, F f) {
  std::vector<Real> out(static_cast<std::size_t>(x.numel()));
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor<Real>::from(x.shape(), std::move(out));
}

}  // namespace

template <class Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, double slope) {
  const Real s = static_cast<Real>(slope);
  return unary<Real>(x, "leaky_relu", [s](Real v) { return v > 0 ? v : v * s; },
                     [x, s](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                       return {mul(g, pointwise_factor(x, [s](Real v) { return v > 0 ? Real(1) : s; }))};
                     });
}

template <class Real>
Tensor<Real> abs(const Tensor<Real>& x) {
  return unary<Real>(x, "abs", [](Real v) { return std::abs(v); },
                     [x](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                       return {mul(g, pointwise_factor(x, [](Real v) {
                                     return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0));
                                   }))};
                     });
}

template <class Real>
Tensor<Real> sqrt(const Tensor<Real>& x) {
  return unary<Real>(x, "sqrt", [](Real v) { return std::sqrt(v); },
                     [x](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                       return {div(g, scale(sqrt(x), 2.0))};
                     });
}

template <class Real>
Tensor<Real> square(const Tensor<Real>& x) {
  return mul(x, x);
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return unary<Real>(x, "sigmoid",
                     [](Real v) {
                       return v >= 0 ? Real(1) / (Real(1) + std::exp(-v)) : std::exp(v) / (Real(1) + std::exp(v));
                     },
                     [x](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                       const Tensor<Real> s = sigmoid(x);
                       return {mul(g, mul(s, add_scalar(scale(s, -1.0), 1.0)))};
                     });
}

template <class Real>
Tensor<Real> softplus(const Tensor<Real>& x) {
  return unary<Real>(x, "softplus",
                     [](Real v) { return std::max(v, Real(0)) + std::log1p(std::exp(-std::abs(v))); },
                     [x](const Tensor<Real>& g) -> std::vector<Tensor<Real>> { return {mul(g, sigmoid(x))}; });
}

template <class Real>
Tensor<Real> clamp(const Tensor<Real>& x, double lo, double hi) {
  const Real l = static_cast<Real>(lo), h = static_cast<Real>(hi);
  return unary<Real>(x, "clamp", [l, h](Real v) { return std::clamp(v, l, h); },
                     [x, l, h](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                       return {mul(g, pointwise_factor(x, [l, h](Real v) { return v > l && v < h ? Real(1) : Real(0); }))};
                     });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasting

template <class Real>
Tensor<Real> sum_to(const Tensor<Real>& x, const Shape& shape) {
  require(x.defined(), "sum_to: undefined operand");
  check_broadcastable(shape, x.shape(), "sum_to");
  std::vector<Real> out(static_cast<std::size_t>(ad::numel(shape)), Real(0));
  auto in = x.data();
  for_each_broadcast(shape, x.shape(), [&](std::int64_t big, std::int64_t small) { out[small] += in[big]; });
  Shape original = x.shape();
  return Tensor<Real>::make(shape, std::move(out), "sum_to", {x},
                            [original](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {broadcast_to(g, original)};
                            });
}

template <class Real>
Tensor<Real> broadcast_to(const Tensor<Real>& x, const Shape& shape) {
  require(x.defined(), "broadcast_to: undefined operand");
  check_broadcastable(x.shape(), shape, "broadcast_to");
  std::vector<Real> out(static_cast<std::size_t>(ad::numel(shape)));
  auto in = x.data();
  for_each_broadcast(x.shape(), shape, [&](std::int64_t big, std::int64_t small) { out[big] = in[small]; });
  Shape original = x.shape();
  return Tensor<Real>::make(shape, std::move(out), "broadcast_to", {x},
                            [original](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {sum_to(g, original)};
                            });
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  require(x.defined(), "sum: undefined operand");
  return reshape(sum_to(x, Shape(x.shape().size(), 1)), Shape{});
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  require(x.defined() && x.numel() > 0, "mean: empty operand");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

template <class Real>
Tensor<Real> sum_sq(const Tensor<Real>& x) {
  return sum(mul(x, x));
}

template <class Real>
Tensor<Real> add_channel_bias(const Tensor<Real>& x, const Tensor<Real>& b) {
  require_rank(x, 4, "add_channel_bias");
  require_rank(b, 1, "add_channel_bias");
  if (b.dim(0) != x.dim(1))
    throw InvalidArgument("add_channel_bias: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<Real> out = values_of(x);
  auto bias = b.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < c; ++k) {
      Real* p = out.data() + (i * c + k) * hw;
      for (std::int64_t j = 0; j < hw; ++j) p[j] += bias[k];
    }
  return Tensor<Real>::make(x.shape(), std::move(out), "add_channel_bias", {x, b},
                            [b, c](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              Tensor<Real> gb;
                              if (b.requires_grad()) gb = reshape(sum_to(g, Shape{1, c, 1, 1}), Shape{c});
                              return {g, gb};
                            });
}

template <class Real>
Tensor<Real> crop(const Tensor<Real>& x, const std::vector<CropOrigin>& origins, std::int64_t h, std::int64_t w) {
  require_rank(x, 4, "crop");
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(static_cast<std::int64_t>(origins.size()) == N, "crop: need one origin per sample");
  for (const auto& o : origins)
    if (o.y < 0 || o.x < 0 || o.y + h > H || o.x + w > W)
      throw InvalidArgument("crop: box (" + std::to_string(o.x) + "," + std::to_string(o.y) + ") size " +
                            std::to_string(w) + "x" + std::to_string(h) + " outside " + shape_str(x.shape()));
  std::vector<Real> out(static_cast<std::size_t>(N * C * h * w));
  auto in = x.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        std::copy_n(in.begin() + ((n * C + c) * H + origins[n].y + y) * W + origins[n].x, w,
                    out.begin() + ((n * C + c) * h + y) * w);
  return Tensor<Real>::make({N, C, h, w}, std::move(out), "crop", {x},
                            [origins, H, W](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {uncrop(g, origins, H, W)};
                            });
}

template <class Real>
Tensor<Real> uncrop(const Tensor<Real>& x, const std::vector<CropOrigin>& origins, std::int64_t H, std::int64_t W) {
  require_rank(x, 4, "uncrop");
  const auto N = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(static_cast<std::int64_t>(origins.size()) == N, "uncrop: need one origin per sample");
  for (const auto& o : origins)
    require(o.y >= 0 && o.x >= 0 && o.y + h <= H && o.x + w <= W, "uncrop: box outside target");
  std::vector<Real> out(static_cast<std::size_t>(N * C * H * W), Real(0));
  auto in = x.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        std::copy_n(in.begin() + ((n * C + c) * h + y) * w, w,
                    out.begin() + ((n * C + c) * H + origins[n].y + y) * W + origins[n].x);
  return Tensor<Real>::make({N, C, H, W}, std::move(out), "uncrop", {x},
                            [origins, h, w](const Tensor<Real>& g) -> std::vector<Tensor<Real>> {
                              return {crop(g, origins, h, w)};
                            });
}

// ---------------------------------------------------------------------------
// Backward pass

namespace {

template <class Real>
std::vector<const Node<Real>*> topo_order(const Tensor<Real>& root) {
  std::vector<const Node<Real>*> order;
  std::unordered_set<const Node<Real>*> seen;
  std::vector<std::pair<const Node<Real>*, std::size_t>> stack;
  if (!root.defined()) return order;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const Node<Real>* parent = node->parents[next++].node();
      if (parent && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace

template <class Real>
std::vector<Tensor<Real>> grad(const Tensor<Real>& output, const std::vector<Tensor<Real>>& inputs,
                               bool create_graph) {
  require(output.defined(), "grad: undefined output");
  if (output.numel() != 1)
    throw InvalidArgument("grad: output must be a scalar, got shape " + shape_str(output.shape()));

  std::unordered_map<const Node<Real>*, Tensor<Real>> grads;
  if (output.requires_grad()) {
    const bool prev = GradMode::enabled();
    GradMode::set_enabled(create_graph);
    try {
      const auto order = topo_order(output);
      grads[output.node()] = Tensor<Real>::full(output.shape(), Real(1));
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node<Real>* node = *it;
        if (!node->backward) continue;
        auto found = grads.find(node);
        if (found == grads.end()) continue;
        const auto parent_grads = node->backward(found->second);
        for (std::size_t i = 0; i < node->parents.size(); ++i) {
          const auto& parent = node->parents[i];
          if (!parent.requires_grad() || !parent_grads[i].defined()) continue;
          auto [slot, inserted] = grads.try_emplace(parent.node(), parent_grads[i]);
          if (!inserted) slot->second = add(slot->second, parent_grads[i]);
        }
      }
    } catch (...) {
      GradMode::set_enabled(prev);
      throw;
    }
    GradMode::set_enabled(prev);
  }

  std::vector<Tensor<Real>> result;
  result.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto found = in.defined() ? grads.find(in.node()) : grads.end();
    result.push_back(found != grads.end() ? found->second : Tensor<Real>::zeros(in.shape()));
  }
  return result;
}

template <class Real>
std::string first_nonfinite(const Tensor<Real>& root) {
  for (const Node<Real>* node : topo_order(root)) {
    for (Real v : node->value)
      if (!std::isfinite(v)) return node->op + " " + shape_str(node->shape);
  }
  return {};
}

// ---------------------------------------------------------------------------

#define SKETCHFILL_INSTANTIATE(R)                                                                              \
  template class Tensor<R>;                                                                                    \
  template Tensor<R> conv2d(const Tensor<R>&, const Tensor<R>&, ConvGeom);                                     \
  template Tensor<R> conv2d_transpose(const Tensor<R>&, const Tensor<R>&, ConvGeom, std::int64_t, std::int64_t); \
  template Tensor<R> conv2d_weight_grad(const Tensor<R>&, const Tensor<R>&, ConvGeom, int, int);               \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                                               \
  template Tensor<R> transpose(const Tensor<R>&);                                                              \
  template Tensor<R> concat(const std::vector<Tensor<R>>&);                                                    \
  template Tensor<R> slice(const Tensor<R>&, std::int64_t, std::int64_t);                                      \
  template Tensor<R> pad_channels(const Tensor<R>&, std::int64_t, std::int64_t);                               \
  template Tensor<R> reshape(const Tensor<R>&, Shape);                                                         \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                                  \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                                                  \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                                  \
  template Tensor<R> div(const Tensor<R>&, const Tensor<R>&);                                                  \
  template Tensor<R> scale(const Tensor<R>&, double);                                                          \
  template Tensor<R> add_scalar(const Tensor<R>&, double);                                                     \
  template Tensor<R> leaky_relu(const Tensor<R>&, double);                                                     \
  template Tensor<R> abs(const Tensor<R>&);                                                                    \
  template Tensor<R> sqrt(const Tensor<R>&);                                                                   \
  template Tensor<R> square(const Tensor<R>&);                                                                 \
  template Tensor<R> sigmoid(const Tensor<R>&);                                                                \
  template Tensor<R> softplus(const Tensor<R>&);                                                               \
  template Tensor<R> clamp(const Tensor<R>&, double, double);                                                  \
  template Tensor<R> sum(const Tensor<R>&);                                                                    \
  template Tensor<R> mean(const Tensor<R>&);                                                                   \
  template Tensor<R> sum_sq(const Tensor<R>&);                                                                 \
  template Tensor<R> sum_to(const Tensor<R>&, const Shape&);                                                   \
  template Tensor<R> broadcast_to(const Tensor<R>&, const Shape&);                                             \
  template Tensor<R> crop(const Tensor<R>&, const std::vector<CropOrigin>&, std::int64_t, std::int64_t);       \
  template Tensor<R> uncrop(const Tensor<R>&, const std::vector<CropOrigin>&, std::int64_t, std::int64_t);     \
  template Tensor<R> add_channel_bias(const Tensor<R>&, const Tensor<R>&);                                     \
  template std::vector<Tensor<R>> grad(const Tensor<R>&, const std::vector<Tensor<R>>&, bool);                 \
  template std::string first_nonfinite(const Tensor<R>&);

SKETCHFILL_INSTANTIATE(float)
SKETCHFILL_INSTANTIATE(double)

#undef SKETCHFILL_INSTANTIATE

}  // namespace sketchfill::ad
