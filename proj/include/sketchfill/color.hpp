#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sketchfill/config.hpp"
#include "sketchfill/raster.hpp"
#include "sketchfill/sketch.hpp"

namespace sketchfill {

/// Semantic label raster. 0 = none, 1 = hair, 2 = lips, 3 = teeth, 4 = brows.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  void set(int x, int y, std::uint8_t v) { labels[static_cast<std::size_t>(y) * width + x] = v; }
};

inline constexpr int kMaxLabel = 4;

/// Label files are 8-bit grayscale PNGs holding the label index directly.
LabelMap read_label_map(const std::string& path);
void write_label_map(const LabelMap& labels, const std::string& path);

using Rgb = std::array<float, 3>;

/// Smoothed color image at the working resolution (128x128 by default).
struct ColorMap {
  RasterImage rgb;

  int side() const { return rgb.width(); }
  Rgb at(int x, int y) const { return {rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2)}; }
  /// Value of the map pixel covering output pixel (x, y) of a w x h image.
  Rgb at_output(int x, int y, int w, int h) const;
};

struct ColorMapParams {
  int side = 128;
  int median_kernel = 3;
  double sigma_range = 25.0;
  double sigma_domain = 7.0;
  int iterations = 40;
};

/// resize -> median -> iterated bilateral. With labels, every labeled region is replaced by the
/// per-channel median of the source pixels carrying that label.
ColorMap build_color_map(const RasterImage& img, const LabelMap* labels = nullptr, const ColorMapParams& params = {});

/// Per-channel median (lower middle for even counts) of the pixels of `img` selected by `select`.
Rgb median_color(const RasterImage& img, const BinaryMask& select);

struct ColorLayer {
  RasterImage rgb;
  BinaryMask valid;

  static ColorLayer empty(int width, int height);
  int width() const { return rgb.width(); }
  int height() const { return rgb.height(); }
  /// rgb is zero wherever valid is false.
  bool invariant_holds() const;
  bool operator==(const ColorLayer&) const = default;
};

struct IrisEstimate {
  Point center;
  Rgb color{};
  double radius = 0.0;
};

/// 10 px at 512, scaled with the image side.
double iris_radius(int side);

/// Eye search box around an annotated eye position, clamped to the image.
Rect eye_box(Point eye, int width, int height);

/// Gradient-based eye center search: argmax over box pixels c of mean_i (d_i . g_i)^2, where d_i is
/// the unit displacement from c to gradient pixel i and g_i the unit image gradient. Only gradients
/// above mean + 0.3 std of the box magnitudes vote. The color is the median inside a circle of
/// radius 8 * box_height / 64 around the center.
IrisEstimate locate_pupil(const RasterImage& img, const Rect& search_box);

/// Objective value at every box pixel, row-major over the box.
std::vector<double> pupil_objective(const RasterImage& img, const Rect& search_box);

struct StrokeParams {
  int count_min = 0;
  int count_max = 8;
  double length_min = 8.0;
  double length_max = 64.0;
  double thickness_min = 2.0;
  double thickness_max = 8.0;
  double jitter_min = 0.0;
  double jitter_max = 2.0;
  /// L-infinity color deviation that ends a stroke.
  double deviation = 0.1;

  static StrokeParams from_config(const Config& cfg);
  void write_to(Config& cfg) const;
};

/// One synthesized stroke in map coordinates. `samples` holds the accepted walk positions.
struct StrokeWalk {
  Rgb color{};
  double radius = 0.0;
  std::vector<Point> samples;
  /// Number of samples the walk would have had without early termination.
  int planned = 0;
};

std::vector<StrokeWalk> plan_strokes(const ColorMap& map, std::uint64_t seed, const StrokeParams& params);

/// Stamps each walk sample as a disk at output scale. A pixel is painted only where the map color
/// stays within the deviation threshold of the stroke color. Later strokes overwrite earlier ones.
ColorLayer render_strokes(const std::vector<StrokeWalk>& strokes, const ColorMap& map, int width, int height,
                          double deviation);

ColorLayer synth_strokes(const ColorMap& map, std::uint64_t seed, const StrokeParams& params, int width, int height);

/// Filled disk (x-cx)^2 + (y-cy)^2 <= r^2 in the iris color.
ColorLayer draw_iris(const ColorLayer& layer, const IrisEstimate& iris);

/// Paints a polyline stroke of the given thickness (disks along the path, sampled every 0.25 px).
void paint_stroke(ColorLayer& layer, const Polyline& points, const Rgb& color, double thickness);

/// Empty layer with probability 0.5, otherwise unchanged.
ColorLayer maybe_drop_color(const ColorLayer& layer, std::uint64_t seed);
bool color_dropped(std::uint64_t seed);

}  // namespace sketchfill
