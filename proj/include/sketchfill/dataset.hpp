#pragma once

#include <cstdint>
#include <future>
#include <memory>
#include <string>
#include <vector>

#include "sketchfill/autodiff.hpp"
#include "sketchfill/color.hpp"
#include "sketchfill/config.hpp"
#include "sketchfill/maskgen.hpp"
#include "sketchfill/sketch.hpp"

namespace sketchfill {

struct EyeAnnotation {
  std::string file;
  Point left;
  Point right;
};

/// CSV `file,lx,ly,rx,ry`; a header line starting with `file` is skipped.
std::vector<EyeAnnotation> read_annotations(const std::string& path);

/// Fraction of the output side between the two aligned eyes.
inline constexpr double kEyeDistanceFrac = 0.25;

/// Canonical eye positions for an aligned side-S image: ((S-1)/2 -+ S/8, (S-1)/2).
Point canonical_left_eye(int side);
Point canonical_right_eye(int side);

/// Similarity transform taking the annotated eyes to the canonical positions, bilinear sampling,
/// source mean color outside the source.
RasterImage align_and_crop(const RasterImage& img, const EyeAnnotation& ann, int out_size);

/// Maps a source point through the alignment transform.
Point align_point(const EyeAnnotation& ann, int out_size, Point p);

namespace channel {
inline constexpr int kRgb = 0;
inline constexpr int kSketch = 3;
inline constexpr int kColor = 4;
inline constexpr int kMask = 7;
inline constexpr int kNoise = 8;
inline constexpr int kCount = 9;
}  // namespace channel

/// Ground truth plus the 9-channel conditional input [rgb(3), sketch, color(3), mask, noise],
/// interleaved per pixel. The constructor checks the structure: 9 channels, square and matching
/// sizes, a 0/1 mask channel and zero rgb inside the mask.
class TrainingSample {
 public:
  TrainingSample(RasterImage target, RasterImage input, MaskSpec spec);

  int side() const noexcept { return target_.width(); }
  const RasterImage& target() const noexcept { return target_; }
  const RasterImage& input() const noexcept { return input_; }
  const MaskSpec& mask_spec() const noexcept { return spec_; }
  BinaryMask mask() const;

  /// Sketch and color channels are zero outside the mask.
  bool conditioning_restricted() const;

  bool operator==(const TrainingSample&) const = default;

 private:
  RasterImage target_;
  RasterImage input_;
  MaskSpec spec_;
};

enum class NoiseDist { Normal, Uniform, Zero };
NoiseDist parse_noise_dist(const std::string& name);
std::string to_string(NoiseDist dist);

struct DatasetConfig {
  int size = 64;
  MaskParams mask;
  SketchConfig sketch;
  ColorMapParams color_map;
  StrokeParams strokes;
  bool iris = true;
  bool color_dropout = true;
  /// Conditioning over the whole frame instead of only inside the mask.
  bool full_frame = false;
  NoiseDist noise = NoiseDist::Normal;

  static DatasetConfig from_config(const Config& cfg);
  void write_to(Config& cfg) const;
};

/// Everything about an image that does not depend on the sample seed.
struct SampleSource {
  RasterImage image;
  SketchLayer sketch;
  ColorMap color_map;
  std::vector<IrisEstimate> irises;
};

SampleSource prepare_source(const RasterImage& img, const DatasetConfig& cfg, const LabelMap* labels = nullptr);
TrainingSample assemble_from(const SampleSource& source, std::uint64_t seed, const DatasetConfig& cfg);
TrainingSample assemble_sample(const RasterImage& img, std::uint64_t seed, const DatasetConfig& cfg);

/// Fills the noise channel of `input` from `seed`.
void fill_noise(RasterImage& input, std::uint64_t seed, NoiseDist dist);

// "FSDS", u32 version 1, u32 count, u16 side, then per sample target f32s (S*S*3), input f32s
// (S*S*9), mask spec (cx, cy, width, height, angle as f32). Little-endian.
std::vector<unsigned char> encode_shard(const std::vector<TrainingSample>& samples);
std::vector<TrainingSample> decode_shard(std::span<const unsigned char> bytes);
void write_shard(const std::vector<TrainingSample>& samples, const std::string& path);
std::vector<TrainingSample> read_shard(const std::string& path);

/// Network-ready batch: inputs [N,9,S,S], targets [N,3,S,S].
struct Batch {
  ad::Tensor<float> inputs;
  ad::Tensor<float> targets;
  std::vector<BinaryMask> masks;
  std::vector<std::size_t> indices;
};

Batch make_batch(const std::vector<TrainingSample>& samples, const std::vector<std::size_t>& indices);

/// Epoch e visits a permutation seeded by (seed, e) in chunks of `batch`; the tail is dropped.
/// Batch k of the whole stream depends only on (seed, k), so a loader can be positioned at any
/// step. With prefetch on, the next batch is built on a worker thread while the caller trains.
class Loader {
 public:
  Loader(std::shared_ptr<const std::vector<TrainingSample>> samples, int batch, std::uint64_t seed,
         bool prefetch = false);
  ~Loader();
  Loader(const Loader&) = delete;
  Loader& operator=(const Loader&) = delete;

  std::size_t batches_per_epoch() const noexcept { return samples_->size() / batch_; }
  std::vector<std::size_t> indices_for(std::uint64_t step) const;

  Batch next();
  void seek(std::uint64_t step);
  std::uint64_t position() const noexcept { return step_; }

 private:
  std::shared_ptr<const std::vector<TrainingSample>> samples_;
  std::size_t batch_;
  std::uint64_t seed_;
  bool prefetch_;
  std::uint64_t step_ = 0;
  std::future<Batch> pending_;
};

std::vector<TrainingSample> read_shards(const std::vector<std::string>& paths);

}  // namespace sketchfill
