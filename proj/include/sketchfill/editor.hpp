#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sketchfill/color.hpp"
#include "sketchfill/config.hpp"
#include "sketchfill/dataset.hpp"
#include "sketchfill/model.hpp"
#include "sketchfill/raster.hpp"
#include "sketchfill/sketch.hpp"

namespace sketchfill {

struct PenStroke {
  Polyline points;
  bool erase = false;
  double width = 1.0;
};

struct ColorStroke {
  Polyline points;
  Rgb rgb{};
  double thickness = 3.0;
};

struct IrisCircle {
  Point center;
  double radius = 0.0;
  Rgb rgb{};
};

struct EditRequest {
  RasterImage image;  // RGB
  BinaryMask mask;
  std::vector<PenStroke> pen;
  std::vector<ColorStroke> color;
  std::vector<IrisCircle> iris;
  std::uint64_t noise_seed = 0;
  /// Pre-drawn layers the strokes are applied on top of (file-based edits, copy-paste).
  std::optional<SketchLayer> sketch_layer;
  std::optional<ColorLayer> color_layer;

  /// Throws RequestError naming the offending field.
  void validate() const;
};

/// Builds the 9-channel generator input. Pen strokes are applied in order (erase clears), color
/// strokes then iris disks are painted in order with the last writer winning. Conditioning is
/// kept only inside the mask, RGB is zeroed there and the noise channel is drawn from
/// derive_seed(noise_seed, {4}), the same stream forging uses for a sample seed.
RasterImage rasterize_user_input(const EditRequest& req, NoiseDist noise = NoiseDist::Normal);

struct CopyPasteRequest {
  RasterImage source;
  BinaryMask source_mask;
  RasterImage target;
  int offset_x = 0;
  int offset_y = 0;
  /// Optional extra target area to complete along with the pasted region.
  std::optional<BinaryMask> target_mask;
  std::uint64_t noise_seed = 0;
};

/// Turns a copy-paste into an edit of the target: the source sketch restricted to the region,
/// and color strokes sampled from the source color map (as in forging, without dropout), both
/// shifted by the offset. The edit mask is the shifted region plus `target_mask`.
EditRequest copy_paste_request(const CopyPasteRequest& req, const DatasetConfig& cfg);

/// Shifts set pixels by (dx, dy); pixels leaving the frame are dropped.
BinaryMask translate(const BinaryMask& mask, int dx, int dy);
ColorLayer translate(const ColorLayer& layer, int dx, int dy);

class Editor {
 public:
  Editor(Generator<float> gen, const Config& config, std::string model_id);
  Editor(Editor&& other);
  static Editor from_checkpoint(const std::string& path);

  /// composite(image, clamp(G(input), 0, 1), mask). Safe to call concurrently.
  RasterImage edit(const EditRequest& req) const;
  RasterImage copy_paste(const CopyPasteRequest& req) const;
  /// The conditioning stack edit() would feed the generator.
  RasterImage preview(const EditRequest& req) const;

  int side() const noexcept { return gen_.config().side; }
  const DatasetConfig& dataset_config() const noexcept { return data_cfg_; }
  const std::string& model_id() const noexcept { return model_id_; }
  std::uint64_t forward_count() const noexcept { return forwards_.load(); }

 private:
  void check(const EditRequest& req) const;

  Generator<float> gen_;
  DatasetConfig data_cfg_;
  std::string model_id_;
  mutable std::atomic<std::uint64_t> forwards_{0};
};

}  // namespace sketchfill
