#pragma once

#include <cstdint>
#include <utility>

#include "sketchfill/config.hpp"
#include "sketchfill/raster.hpp"

namespace sketchfill {

struct MaskSpec {
  double cx = 0.0;
  double cy = 0.0;
  double width = 0.0;
  double height = 0.0;
  /// Degrees, counter-clockwise in image coordinates.
  double angle = 0.0;

  bool operator==(const MaskSpec&) const = default;
};

struct MaskParams {
  /// Width and height are drawn independently from [min_frac, max_frac] * side.
  double min_frac = 0.25;
  double max_frac = 0.5;
  double max_angle = 45.0;
  bool axis_aligned = false;

  static MaskParams from_config(const Config& cfg);
  void write_to(Config& cfg) const;
};

/// Pixel (x, y) is set iff, in rectangle coordinates (u, v), -w/2 < u <= w/2 and -h/2 < v <= h/2.
BinaryMask rasterize_mask(const MaskSpec& spec, int width, int height);

/// Random rotated rectangle kept fully inside the image.
std::pair<MaskSpec, BinaryMask> sample_mask(int width, int height, std::uint64_t seed, const MaskParams& params = {});
std::pair<MaskSpec, BinaryMask> sample_mask(int width, int height, std::uint64_t seed, bool axis_aligned_only);

/// 3x3 closing. Pixels outside the image count as set during the erosion so masks touching the
/// border keep their border pixels.
BinaryMask normalize_user_mask(const BinaryMask& raw);

/// Mean of the set-bit coordinates.
std::pair<double, double> mask_centroid(const BinaryMask& mask);

/// crop x crop box centered on the mask centroid, shifted to lie inside the image. An empty mask
/// centers the box on the image.
Rect local_crop_box(const BinaryMask& mask, int crop);

}  // namespace sketchfill
