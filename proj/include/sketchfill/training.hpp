#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sketchfill/adam.hpp"
#include "sketchfill/config.hpp"
#include "sketchfill/dataset.hpp"
#include "sketchfill/maskgen.hpp"
#include "sketchfill/model.hpp"

namespace sketchfill {

enum class GanVariant { WganGp, Original };
GanVariant parse_gan_variant(const std::string& name);
std::string to_string(GanVariant v);

struct LossWeights {
  double alpha = 1e-3;
  double lambda = 100.0;
  double epsilon_drift = 1e-3;
  GanVariant variant = GanVariant::WganGp;

  static LossWeights from_config(const Config& cfg);
  void write_to(Config& cfg) const;
};

/// Maps an [N,8,S,S] tensor to [N] critic values.
template <class Real>
using Critic = std::function<ad::Tensor<Real>(const ad::Tensor<Real>&)>;

/// target + mask * (output - target), mask [N,1,H,W] broadcast over channels.
template <class Real>
ad::Tensor<Real> composite_tensor(const ad::Tensor<Real>& output, const ad::Tensor<Real>& target,
                                  const ad::Tensor<Real>& mask);

/// Mean absolute difference over every element of the composited output.
template <class Real>
ad::Tensor<Real> rec_loss(const ad::Tensor<Real>& output, const ad::Tensor<Real>& target, const ad::Tensor<Real>& mask);

/// Single-image form; the mask is shared by all channels.
double rec_loss(const RasterImage& output, const RasterImage& target, const BinaryMask& mask);

template <class Real>
struct GanTerms {
  ad::Tensor<Real> d_real;   // [N]
  ad::Tensor<Real> d_fake;   // [N]
  ad::Tensor<Real> core;     // adversarial part of the critic loss
  ad::Tensor<Real> penalty;  // unweighted E[(|grad| - 1)^2]; zero for the original GAN
  ad::Tensor<Real> d_loss;   // core + lambda * penalty
};

/// E[D(f)] - E[D(r)] + lambda E[(||grad_u D(u)|| - 1)^2], u = r + t (f - r), t ~ U(0,1) per sample.
/// The penalty is built with a create-graph backward so d_loss is differentiable in D's parameters.
template <class Real>
GanTerms<Real> wgan_gp_loss(const Critic<Real>& critic, const ad::Tensor<Real>& real, const ad::Tensor<Real>& fake,
                            double lambda, std::uint64_t seed);

/// Logistic critic with logits clipped to +-30. d_loss = -E[log s(r)] - E[log(1 - s(f))].
template <class Real>
GanTerms<Real> original_gan_loss(const Critic<Real>& critic, const ad::Tensor<Real>& real,
                                 const ad::Tensor<Real>& fake);

/// Generator-side adversarial term on the fake critic values: -E[D(f)] for WGAN-GP, the
/// non-saturating -E[log s(f)] for the original GAN.
template <class Real>
ad::Tensor<Real> generator_adversarial(const ad::Tensor<Real>& d_fake, GanVariant variant);

template <class Real>
struct TotalLoss {
  ad::Tensor<Real> g_total;
  ad::Tensor<Real> d_total;
  ad::Tensor<Real> drift;  // E[D(r)^2], unweighted
};

/// g_total = alpha * rec + adversarial(d_fake); d_total = d_loss + epsilon * E[D(r)^2].
template <class Real>
TotalLoss<Real> total_loss(const ad::Tensor<Real>& rec, const GanTerms<Real>& terms,
                           const ad::Tensor<Real>& d_fake_for_g, const LossWeights& weights);

struct TrainConfig {
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  LossWeights weights;
  MaskParams real_masks;
  int batch = 4;
  int n_critic = 1;
  double lr = 2e-4;
  std::uint64_t seed = 1;
  /// Real critic inputs carry a fresh random mask (true) or the sample's own mask (false).
  bool fresh_real_mask = true;
  bool prefetch = false;
  /// Other keys (dataset settings) carried into the checkpoint sidecar so inference can
  /// rebuild the conditioning the model was trained on.
  Config extra;

  static TrainConfig from_config(const Config& cfg);
  void write_to(Config& cfg) const;
};

struct StepMetrics {
  std::int64_t step = 0;
  double d_loss = 0;
  double g_loss = 0;
  double rec = 0;
  double gp = 0;
  double drift = 0;
};

/// Mean |clamp(G, 0, 1) - target| over masked pixels and channels, after composition.
double masked_l1(const Generator<float>& gen, const std::vector<TrainingSample>& samples, int batch = 8);

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::shared_ptr<const std::vector<TrainingSample>> samples);

  /// One iteration: n_critic critic updates, then one generator update.
  StepMetrics step();

  std::int64_t steps_done() const noexcept { return step_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  const Generator<float>& generator() const noexcept { return gen_; }
  const Discriminator<float>& discriminator() const noexcept { return disc_; }

  /// Parameters, optimizer moments and step counter. A sidecar `<path>.json` records the config.
  void save(const std::string& path) const;
  /// Restores a checkpoint written by save() for the same config and repositions the loader.
  void load(const std::string& path);

 private:
  TrainConfig cfg_;
  std::shared_ptr<const std::vector<TrainingSample>> samples_;
  Generator<float> gen_;
  Discriminator<float> disc_;
  ad::AdamState<float> gen_opt_;
  ad::AdamState<float> disc_opt_;
  Loader loader_;
  std::int64_t step_ = 0;
};

struct TrainOptions {
  std::int64_t steps = 0;
  std::int64_t checkpoint_every = 0;
  /// Directory for checkpoints (`ckpt_<step>.fsck`, `latest.fsck`) and `metrics.csv`.
  std::string out_dir;
  std::string resume_from;
  const std::vector<TrainingSample>* heldout = nullptr;
  std::int64_t eval_every = 0;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  std::int64_t steps = 0;
  std::vector<std::pair<std::int64_t, double>> heldout_l1;
  std::string latest_checkpoint;
};

/// Runs `opts.steps` iterations (continuing the resumed step count), appending
/// `step,d_loss,g_loss,rec,gp,drift` rows to metrics.csv and held-out `step,masked_l1` rows to
/// eval.csv. A checkpoint is written before the first step and every `checkpoint_every` steps.
TrainResult train(const TrainConfig& cfg, std::shared_ptr<const std::vector<TrainingSample>> samples,
                  const TrainOptions& opts);

/// Generator plus the config stored next to a checkpoint.
struct LoadedGenerator {
  Generator<float> gen;
  Config config;
  std::string hash;
};
LoadedGenerator load_generator(const std::string& checkpoint_path);

}  // namespace sketchfill
