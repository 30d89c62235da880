#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sketchfill/autodiff.hpp"
#include "sketchfill/checkpoint.hpp"
#include "sketchfill/config.hpp"

namespace sketchfill {

/// Per-pixel normalization across channels: a / sqrt(mean_c(a^2) + eps).
template <class Real>
ad::Tensor<Real> lrn(const ad::Tensor<Real>& a, double eps = 1e-8);

struct LayerSpec {
  enum class Kind { Conv, Deconv };
  Kind kind = Kind::Conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int pad = 1;
  bool activation = true;
  bool lrn = false;
};

/// Encoder / dilated bottleneck / decoder completion network.
///
/// Layer order: one full-resolution conv, then per downsample a strided conv and a
/// conv, the dilated convs, `bottleneck_convs` plain convs, then per upsample a 4x4
/// transposed conv (concatenated with the encoder output of the same resolution
/// when skips are on) and a conv, and a three-layer tail ending in a linear RGB
/// conv. With the defaults that is 23 layers, LRN after the first 14.
struct GeneratorConfig {
  int side = 64;
  int base_channels = 8;
  int max_channels = 64;
  int downsamples = 3;
  std::vector<int> dilations{2, 4, 8, 16};
  int bottleneck_convs = 3;
  bool skip_connections = true;
  bool noise_input = true;
  int lrn_layers = 14;
  double slope = 0.2;
  /// Optional width per resolution level (downsamples + 1 entries).
  std::vector<int> channel_table;

  static GeneratorConfig desk();
  static GeneratorConfig full_scale();
  /// Reads `gen.*` keys over the desk defaults; `size` sets the side.
  static GeneratorConfig from_config(const Config& cfg);
  void write_to(Config& cfg) const;

  int layer_count() const;
  int level_channels(int level) const;
  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

/// Global branch over the full 8-channel frame, local branch over a crop of half
/// the side centered on the edit, fused by a learned linear layer.
///
/// Each branch alternates plain and stride-2 3x3 convs until 1x1 with
/// `feature_dim` channels. The branch at side S has log2(S) strided convs and the
/// remaining layers are plain convs placed at the deepest levels. Defaults:
/// 2 log2(S) - 1 layers for the global branch and 2 log2(S/2) for the local one
/// (17 and 16 at 512).
struct DiscriminatorConfig {
  int side = 64;
  int base_channels = 8;
  int feature_dim = 64;
  int global_layers = 0;  // 0 selects the default count
  int local_layers = 0;
  bool mask_input = true;
  double slope = 0.2;

  static DiscriminatorConfig desk();
  static DiscriminatorConfig full_scale();
  static DiscriminatorConfig from_config(const Config& cfg);
  void write_to(Config& cfg) const;

  int local_side() const { return side / 2; }
  int global_layer_count() const;
  int local_layer_count() const;
  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

template <class Real>
class Generator {
 public:
  using Tensor = ad::Tensor<Real>;

  Generator(GeneratorConfig cfg, std::uint64_t seed);

  /// [N,9,S,S] -> [N,3,S,S], linear output.
  Tensor forward(const Tensor& input) const { return forward_with(params_, input); }
  Tensor forward_with(const std::vector<Tensor>& params, const Tensor& input) const;

  const GeneratorConfig& config() const noexcept { return cfg_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }

  void save(TensorTable& table) const;
  /// Throws InvalidArgument on a missing entry or shape mismatch.
  void load(const TensorTable& table);

 private:
  GeneratorConfig cfg_;
  std::vector<LayerSpec> layers_;
  std::vector<Tensor> params_;  // w0, b0, w1, b1, ...
  std::vector<std::string> names_;
};

template <class Real>
class Discriminator {
 public:
  using Tensor = ad::Tensor<Real>;

  Discriminator(DiscriminatorConfig cfg, std::uint64_t seed);

  /// full [N,8,S,S] (rgb, sketch, color, mask); one local crop origin per sample.
  /// Returns [N] critic values.
  Tensor forward(const Tensor& full, const std::vector<ad::CropOrigin>& crops) const {
    return forward_with(params_, full, crops);
  }
  Tensor forward_with(const std::vector<Tensor>& params, const Tensor& full,
                      const std::vector<ad::CropOrigin>& crops) const;

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  const std::vector<LayerSpec>& global_layers() const noexcept { return global_; }
  const std::vector<LayerSpec>& local_layers() const noexcept { return local_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }
  /// Index of the fusion weight [2F,1] in parameters(); global rows first.
  std::size_t fuse_weight_index() const noexcept { return params_.size() - 2; }

  void save(TensorTable& table) const;
  void load(const TensorTable& table);

 private:
  Tensor branch(const std::vector<Tensor>& params, std::size_t first, const std::vector<LayerSpec>& layers,
                Tensor x) const;

  DiscriminatorConfig cfg_;
  std::vector<LayerSpec> global_;
  std::vector<LayerSpec> local_;
  std::vector<Tensor> params_;  // global w,b..., local w,b..., fuse w, fuse b
  std::vector<std::string> names_;
};

}  // namespace sketchfill
