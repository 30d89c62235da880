#pragma once

#include <array>
#include <string>
#include <vector>

#include "sketchfill/config.hpp"
#include "sketchfill/raster.hpp"

namespace sketchfill {

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
double dot(Point a, Point b);
double norm(Point a);
double distance(Point a, Point b);

using Polyline = std::vector<Point>;

struct CubicSegment {
  std::array<Point, 4> p;

  Point eval(double t) const;
  Point derivative(double t) const;
  Point second_derivative(double t) const;
  /// Length of the control polygon (an upper bound on arc length).
  double hull_length() const;
};

struct SplinePath {
  std::vector<CubicSegment> segments;
  bool closed = false;
};

/// Per-pixel edge strength in [0,1].
struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<float> strength;

  float at(int x, int y) const { return strength[static_cast<std::size_t>(y) * width + x]; }
};

/// The stroke raster is a plain bit image.
using SketchLayer = BinaryMask;

enum class EdgeDetector { Gradient, Xdog, Canny };

EdgeDetector parse_edge_detector(const std::string& name);
std::string to_string(EdgeDetector detector);

struct EdgeParams {
  EdgeDetector detector = EdgeDetector::Gradient;
  double sigma = 1.0;
  /// Gradient: strength = clamp(gain * |grad G_sigma * I|).
  double gain = 6.0;
  // XDoG
  double xdog_k = 1.6;
  double xdog_tau = 0.98;
  double xdog_phi = 200.0;
  double xdog_eps = -0.005;
  // Canny hysteresis thresholds on the gradient magnitude (image units per pixel).
  double canny_low = 0.04;
  double canny_high = 0.1;
};

EdgeMap detect_edges(const RasterImage& img, const EdgeParams& params);

/// Zhang-Suen thinning.
BinaryMask thin(const BinaryMask& bits);

/// Binarize at `threshold`, thin, then walk 8-connected chains. Chains split at pixels whose
/// neighbour count is not 2. Closed loops are returned with their first point repeated at the end.
std::vector<Polyline> trace(const EdgeMap& edges, double threshold);

/// Least-squares cubic Bezier fitting with recursive subdivision at the worst point.
SplinePath fit_splines(const Polyline& polyline, double max_error);

/// Straight-segment path through the polyline vertices (handles at thirds).
SplinePath polyline_path(const Polyline& polyline);

/// Bounding-box area of the control points, counted in pixels: (dx + 1) * (dy + 1).
double control_bbox_area(const SplinePath& path);

std::vector<SplinePath> prune_small(const std::vector<SplinePath>& paths, double min_bbox_area);

/// `strength` passes of a 3-point moving average along the control polygon (joints and handles
/// alike), wrapping around closed paths. Handles are then re-aligned at each joint for C1
/// continuity. Open-path endpoints never move.
SplinePath smooth_controls(const SplinePath& path, int strength);

/// Sum of absolute turning angles between consecutive segment chords.
double total_turning(const SplinePath& path);

/// Sets the pixel containing each curve sample (samples <= 0.25 px apart) and every pixel whose
/// center lies within stroke_width / 2 of a sample.
SketchLayer rasterize(const std::vector<SplinePath>& paths, int width, int height, double stroke_width);

/// Largest nearest-point distance from a polyline point to the path.
double max_deviation(const SplinePath& path, const Polyline& polyline);

struct SketchConfig {
  EdgeParams edges;
  double threshold = 0.5;
  double max_error = 1.0;
  /// Prune threshold in px^2 at 512x512; scaled with image area.
  double min_bbox_area_512 = 64.0;
  int smooth = 2;
  double stroke_width = 1.0;
  /// Skip fitting, pruning and smoothing: the raw thinned edges become the sketch.
  bool raw_edges = false;

  static SketchConfig from_config(const Config& cfg);
  void write_to(Config& cfg) const;
  double min_bbox_area(int width, int height) const;
};

SketchLayer make_sketch(const RasterImage& img, const SketchConfig& cfg);

/// Every polyline traced from the sketch edges of `img`, before fitting.
std::vector<Polyline> sketch_polylines(const RasterImage& img, const SketchConfig& cfg);

}  // namespace sketchfill
