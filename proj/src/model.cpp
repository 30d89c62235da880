#include "sketchfill/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "sketchfill/error.hpp"

namespace sketchfill {

using ad::ConvGeom;

template <class Real>
ad::Tensor<Real> lrn(const ad::Tensor<Real>& a, double eps) {
  if (!a.defined() || a.rank() != 4) throw InvalidArgument("lrn: expected [N,C,H,W]");
  const auto n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const auto mean_sq = ad::scale(ad::sum_to(ad::mul(a, a), {n, 1, h, w}), 1.0 / static_cast<double>(c));
  const auto denom = ad::sqrt(ad::add_scalar(mean_sq, eps));
  return ad::div(a, ad::broadcast_to(denom, a.shape()));
}

// ---------------------------------------------------------------------------
// Configs

namespace {

int log2_exact(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return (1 << l) == v ? l : -1;
}

std::string join(const std::vector<int>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

}  // namespace

GeneratorConfig GeneratorConfig::desk() { return {}; }

GeneratorConfig GeneratorConfig::full_scale() {
  GeneratorConfig cfg;
  cfg.side = 512;
  cfg.base_channels = 64;
  cfg.max_channels = 512;
  return cfg;
}

GeneratorConfig GeneratorConfig::from_config(const Config& c) {
  GeneratorConfig cfg;
  cfg.side = c.get_int("size", cfg.side);
  cfg.base_channels = c.get_int("gen.base_channels", cfg.base_channels);
  cfg.max_channels = c.get_int("gen.max_channels", cfg.max_channels);
  cfg.downsamples = c.get_int("gen.downsamples", cfg.downsamples);
  cfg.dilations = c.get_int_list("gen.dilations", cfg.dilations);
  cfg.bottleneck_convs = c.get_int("gen.bottleneck_convs", cfg.bottleneck_convs);
  cfg.skip_connections = c.get_bool("gen.skip", cfg.skip_connections);
  cfg.noise_input = c.get_bool("gen.noise", cfg.noise_input);
  cfg.lrn_layers = c.get_int("gen.lrn_layers", cfg.lrn_layers);
  cfg.slope = c.get_double("gen.slope", cfg.slope);
  cfg.channel_table = c.get_int_list("gen.channel_table", cfg.channel_table);
  cfg.validate();
  return cfg;
}

void GeneratorConfig::write_to(Config& c) const {
  c.set("size", std::to_string(side));
  c.set("gen.base_channels", std::to_string(base_channels));
  c.set("gen.max_channels", std::to_string(max_channels));
  c.set("gen.downsamples", std::to_string(downsamples));
  c.set("gen.dilations", join(dilations));
  c.set("gen.bottleneck_convs", std::to_string(bottleneck_convs));
  c.set("gen.skip", skip_connections ? "true" : "false");
  c.set("gen.noise", noise_input ? "true" : "false");
  c.set("gen.lrn_layers", std::to_string(lrn_layers));
  std::ostringstream slope_str;
  slope_str.precision(17);
  slope_str << slope;
  c.set("gen.slope", slope_str.str());
  if (!channel_table.empty()) c.set("gen.channel_table", join(channel_table));
}

int GeneratorConfig::layer_count() const {
  return 1 + 2 * downsamples + static_cast<int>(dilations.size()) + bottleneck_convs + 2 * downsamples + 3;
}

int GeneratorConfig::level_channels(int level) const {
  if (!channel_table.empty()) return channel_table.at(static_cast<std::size_t>(level));
  return std::min(base_channels << level, max_channels);
}

void GeneratorConfig::validate() const {
  if (downsamples < 1 || side % (1 << downsamples) != 0)
    throw InvalidArgument("generator: side " + std::to_string(side) + " not divisible by 2^" +
                          std::to_string(downsamples));
  if (base_channels < 1 || max_channels < base_channels) throw InvalidArgument("generator: bad channel widths");
  if (!channel_table.empty() && static_cast<int>(channel_table.size()) != downsamples + 1)
    throw InvalidArgument("generator: channel table needs downsamples + 1 entries");
  if (lrn_layers < 0 || lrn_layers > layer_count())
    throw InvalidArgument("generator: LRN split " + std::to_string(lrn_layers) + " exceeds layer count " +
                          std::to_string(layer_count()));
  for (int d : dilations)
    if (d < 1) throw InvalidArgument("generator: dilation must be >= 1");
}

DiscriminatorConfig DiscriminatorConfig::desk() { return {}; }

DiscriminatorConfig DiscriminatorConfig::full_scale() {
  DiscriminatorConfig cfg;
  cfg.side = 512;
  cfg.base_channels = 64;
  cfg.feature_dim = 512;
  return cfg;
}

DiscriminatorConfig DiscriminatorConfig::from_config(const Config& c) {
  DiscriminatorConfig cfg;
  cfg.side = c.get_int("size", cfg.side);
  cfg.base_channels = c.get_int("disc.base_channels", cfg.base_channels);
  cfg.feature_dim = c.get_int("disc.feature_dim", cfg.feature_dim);
  cfg.global_layers = c.get_int("disc.global_layers", cfg.global_layers);
  cfg.local_layers = c.get_int("disc.local_layers", cfg.local_layers);
  cfg.mask_input = c.get_bool("disc.mask_input", cfg.mask_input);
  cfg.slope = c.get_double("disc.slope", cfg.slope);
  cfg.validate();
  return cfg;
}

void DiscriminatorConfig::write_to(Config& c) const {
  c.set("size", std::to_string(side));
  c.set("disc.base_channels", std::to_string(base_channels));
  c.set("disc.feature_dim", std::to_string(feature_dim));
  c.set("disc.global_layers", std::to_string(global_layer_count()));
  c.set("disc.local_layers", std::to_string(local_layer_count()));
  c.set("disc.mask_input", mask_input ? "true" : "false");
  std::ostringstream slope_str;
  slope_str.precision(17);
  slope_str << slope;
  c.set("disc.slope", slope_str.str());
}

int DiscriminatorConfig::global_layer_count() const {
  return global_layers > 0 ? global_layers : 2 * log2_exact(side) - 1;
}

int DiscriminatorConfig::local_layer_count() const {
  return local_layers > 0 ? local_layers : 2 * log2_exact(local_side());
}

void DiscriminatorConfig::validate() const {
  const int lg = log2_exact(side);
  if (lg < 3) throw InvalidArgument("discriminator: side must be a power of two >= 8, got " + std::to_string(side));
  const int ll = lg - 1;
  const int g = global_layer_count(), l = local_layer_count();
  if (g < lg || g > 2 * lg) throw InvalidArgument("discriminator: global layer count out of range");
  if (l < ll || l > 2 * ll) throw InvalidArgument("discriminator: local layer count out of range");
  if (base_channels < 1 || feature_dim < base_channels) throw InvalidArgument("discriminator: bad channel widths");
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

template <class Real>
ad::Tensor<Real> init_weight(const ad::Shape& shape, double fan_in, double slope, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<Real> v(static_cast<std::size_t>(ad::numel(shape)));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return ad::Tensor<Real>::variable(shape, std::move(v));
}

template <class Real>
void add_layer_params(const LayerSpec& s, double slope, std::mt19937_64& rng, std::vector<ad::Tensor<Real>>& params) {
  if (s.kind == LayerSpec::Kind::Conv) {
    params.push_back(init_weight<Real>({s.out_channels, s.in_channels, s.kernel, s.kernel},
                                       static_cast<double>(s.in_channels) * s.kernel * s.kernel, slope, rng));
  } else {
    const double fan_in = static_cast<double>(s.in_channels) * s.kernel * s.kernel / (s.stride * s.stride);
    params.push_back(init_weight<Real>({s.in_channels, s.out_channels, s.kernel, s.kernel}, fan_in, slope, rng));
  }
  params.push_back(ad::Tensor<Real>::variable({s.out_channels}, std::vector<Real>(s.out_channels, Real(0))));
}

template <class Real>
ad::Tensor<Real> apply_layer(const LayerSpec& s, const ad::Tensor<Real>& w, const ad::Tensor<Real>& b,
                             const ad::Tensor<Real>& x, double slope) {
  const ConvGeom geom{s.stride, s.pad, s.dilation};
  ad::Tensor<Real> y = s.kind == LayerSpec::Kind::Conv
                           ? ad::conv2d(x, w, geom)
                           : ad::conv2d_transpose(x, w, geom, x.dim(2) * s.stride, x.dim(3) * s.stride);
  y = ad::add_channel_bias(y, b);
  if (s.activation) y = ad::leaky_relu(y, slope);
  if (s.lrn) y = lrn(y);
  return y;
}

template <class Real>
void save_params(const std::vector<ad::Tensor<Real>>& params, const std::vector<std::string>& names,
                 TensorTable& table) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].data();
    table[names[i]] = TensorRecord{params[i].shape(), std::vector<float>(d.begin(), d.end())};
  }
}

template <class Real>
void load_params(std::vector<ad::Tensor<Real>>& params, const std::vector<std::string>& names,
                 const TensorTable& table) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = table.find(names[i]);
    if (it == table.end()) throw InvalidArgument("checkpoint is missing tensor '" + names[i] + "'");
    if (it->second.dims != params[i].shape())
      throw InvalidArgument("checkpoint tensor '" + names[i] + "' has shape " + ad::shape_str(it->second.dims) +
                            ", model expects " + ad::shape_str(params[i].shape()));
    auto dst = params[i].mutable_data();
    std::transform(it->second.data.begin(), it->second.data.end(), dst.begin(),
                   [](float v) { return static_cast<Real>(v); });
  }
}

LayerSpec conv(int in, int out, int stride = 1, int dilation = 1) {
  LayerSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.stride = stride;
  s.dilation = dilation;
  s.pad = dilation;
  return s;
}

LayerSpec deconv(int in, int out) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::Deconv;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = 4;
  s.stride = 2;
  s.pad = 1;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator

template <class Real>
Generator<Real>::Generator(GeneratorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int D = cfg_.downsamples;
  const int in_ch = cfg_.noise_input ? 9 : 8;
  layers_.push_back(conv(in_ch, cfg_.level_channels(0)));
  for (int l = 1; l <= D; ++l) {
    layers_.push_back(conv(cfg_.level_channels(l - 1), cfg_.level_channels(l), 2));
    layers_.push_back(conv(cfg_.level_channels(l), cfg_.level_channels(l)));
  }
  const int deep = cfg_.level_channels(D);
  for (int d : cfg_.dilations) layers_.push_back(conv(deep, deep, 1, d));
  for (int i = 0; i < cfg_.bottleneck_convs; ++i) layers_.push_back(conv(deep, deep));
  for (int l = D - 1; l >= 0; --l) {
    const int c = cfg_.level_channels(l);
    layers_.push_back(deconv(cfg_.level_channels(l + 1), c));
    layers_.push_back(conv(cfg_.skip_connections ? 2 * c : c, c));
  }
  const int c0 = cfg_.level_channels(0);
  const int tail = std::max(c0 / 2, 3);
  layers_.push_back(conv(c0, c0));
  layers_.push_back(conv(c0, tail));
  LayerSpec out = conv(tail, 3);
  out.activation = false;
  layers_.push_back(out);
  for (int i = 0; i < static_cast<int>(layers_.size()); ++i) layers_[i].lrn = i < cfg_.lrn_layers;

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    add_layer_params<Real>(layers_[i], cfg_.slope, rng, params_);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gen/%02zu/", i);
    names_.push_back(std::string(buf) + "w");
    names_.push_back(std::string(buf) + "b");
  }
}

template <class Real>
ad::Tensor<Real> Generator<Real>::forward_with(const std::vector<Tensor>& params, const Tensor& input) const {
  const int S = cfg_.side;
  if (!input.defined() || input.rank() != 4 || input.dim(1) != 9 || input.dim(2) != S || input.dim(3) != S)
    throw InvalidArgument("generator expects [N,9," + std::to_string(S) + "," + std::to_string(S) + "], got " +
                          (input.defined() ? ad::shape_str(input.shape()) : std::string("undefined")));
  if (params.size() != params_.size()) throw InvalidArgument("generator: wrong parameter count");

  std::size_t li = 0;
  auto step = [&](const Tensor& x) {
    Tensor y = apply_layer(layers_[li], params[2 * li], params[2 * li + 1], x, cfg_.slope);
    ++li;
    return y;
  };

  const int D = cfg_.downsamples;
  std::vector<Tensor> skips(static_cast<std::size_t>(D));
  Tensor h = step(cfg_.noise_input ? input : ad::slice(input, 0, 8));
  for (int l = 1; l <= D; ++l) {
    skips[static_cast<std::size_t>(l - 1)] = h;
    h = step(h);
    h = step(h);
  }
  for (std::size_t i = 0; i < cfg_.dilations.size(); ++i) h = step(h);
  for (int i = 0; i < cfg_.bottleneck_convs; ++i) h = step(h);
  for (int l = D - 1; l >= 0; --l) {
    h = step(h);
    if (cfg_.skip_connections) h = ad::concat<Real>({h, skips[static_cast<std::size_t>(l)]});
    h = step(h);
  }
  h = step(h);
  h = step(h);
  return step(h);
}

template <class Real>
void Generator<Real>::save(TensorTable& table) const {
  save_params(params_, names_, table);
}

template <class Real>
void Generator<Real>::load(const TensorTable& table) {
  load_params(params_, names_, table);
}

// ---------------------------------------------------------------------------
// Discriminator

namespace {

std::vector<LayerSpec> branch_layers(int side, int layer_count, int base, int feat) {
  const int levels = log2_exact(side);
  const int plain = layer_count - levels;
  std::vector<LayerSpec> out;
  int cur = 8;
  for (int i = 0; i < levels; ++i) {
    const int c = i == levels - 1 ? feat : std::min(base << i, feat);
    if (i >= levels - plain) {
      out.push_back(conv(cur, c));
      cur = c;
    }
    out.push_back(conv(cur, c, 2));
    cur = c;
  }
  return out;
}

}  // namespace

template <class Real>
Discriminator<Real>::Discriminator(DiscriminatorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  global_ = branch_layers(cfg_.side, cfg_.global_layer_count(), cfg_.base_channels, cfg_.feature_dim);
  local_ = branch_layers(cfg_.local_side(), cfg_.local_layer_count(), cfg_.base_channels, cfg_.feature_dim);
  std::mt19937_64 rng(seed);
  auto add_branch = [&](const std::vector<LayerSpec>& layers, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      add_layer_params<Real>(layers[i], cfg_.slope, rng, params_);
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%s/%02zu/", prefix.c_str(), i);
      names_.push_back(std::string(buf) + "w");
      names_.push_back(std::string(buf) + "b");
    }
  };
  add_branch(global_, "disc/global");
  add_branch(local_, "disc/local");
  const int fused = 2 * cfg_.feature_dim;
  params_.push_back(init_weight<Real>({fused, 1}, fused, 0.0, rng));
  params_.push_back(Tensor::variable({1}, {Real(0)}));
  names_.push_back("disc/fuse/w");
  names_.push_back("disc/fuse/b");
}

template <class Real>
ad::Tensor<Real> Discriminator<Real>::branch(const std::vector<Tensor>& params, std::size_t first,
                                             const std::vector<LayerSpec>& layers, Tensor x) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    x = apply_layer(layers[i], params[first + 2 * i], params[first + 2 * i + 1], x, cfg_.slope);
  return ad::reshape(x, {x.dim(0), x.dim(1)});
}

template <class Real>
ad::Tensor<Real> Discriminator<Real>::forward_with(const std::vector<Tensor>& params, const Tensor& full,
                                                   const std::vector<ad::CropOrigin>& crops) const {
  const int S = cfg_.side;
  if (!full.defined() || full.rank() != 4 || full.dim(1) != 8 || full.dim(2) != S || full.dim(3) != S)
    throw InvalidArgument("discriminator expects [N,8," + std::to_string(S) + "," + std::to_string(S) + "], got " +
                          (full.defined() ? ad::shape_str(full.shape()) : std::string("undefined")));
  if (params.size() != params_.size()) throw InvalidArgument("discriminator: wrong parameter count");
  const auto N = full.dim(0);
  Tensor x = full;
  if (!cfg_.mask_input) {
    std::vector<Real> keep(static_cast<std::size_t>(full.numel()), Real(1));
    const auto plane = static_cast<std::int64_t>(S) * S;
    for (std::int64_t n = 0; n < N; ++n) std::fill_n(keep.begin() + (n * 8 + 7) * plane, plane, Real(0));
    x = ad::mul(x, Tensor::from(full.shape(), std::move(keep)));
  }
  const std::size_t local_first = 2 * global_.size();
  const Tensor g = branch(params, 0, global_, x);
  const Tensor l = branch(params, local_first, local_, ad::crop(x, crops, cfg_.local_side(), cfg_.local_side()));
  const Tensor fused = ad::concat<Real>({g, l});
  const Tensor& w = params[params.size() - 2];
  const Tensor& b = params[params.size() - 1];
  const Tensor out = ad::add(ad::matmul(fused, w), ad::broadcast_to(ad::reshape(b, {1, 1}), {N, 1}));
  return ad::reshape(out, {N});
}

template <class Real>
void Discriminator<Real>::save(TensorTable& table) const {
  save_params(params_, names_, table);
}

template <class Real>
void Discriminator<Real>::load(const TensorTable& table) {
  load_params(params_, names_, table);
}

template ad::Tensor<float> lrn(const ad::Tensor<float>&, double);
template ad::Tensor<double> lrn(const ad::Tensor<double>&, double);
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace sketchfill
