#pragma once

#include <cmath>
#include <limits>

#include "sketchfill/raster.hpp"
#include "sketchfill/sketch.hpp"
#include "sketchfill/synth.hpp"

namespace testshapes {

using namespace sketchfill;

inline RasterImage disk_image(int w, int h, double cx, double cy, double r, float inside, float outside) {
  RasterImage img(w, h, 3, outside);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::hypot(x - cx, y - cy) <= r)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = inside;
  return img;
}

inline BinaryMask disk_boundary(int w, int h, double cx, double cy, double r) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::abs(std::hypot(x - cx, y - cy) - r) <= 0.5) m.set(x, y);
  return m;
}

inline RasterImage shape_image(int side, std::uint64_t seed) { return synth_shapes(side, seed).image; }

// Four cubic arcs, magic constant for a unit circle.
inline SplinePath circle_path(double cx, double cy, double r) {
  const double k = 0.5522847498307936 * r;
  SplinePath p;
  p.closed = true;
  const Point c{cx, cy};
  const Point e{r, 0}, n{0, r};
  const Point ek{k, 0}, nk{0, k};
  p.segments.push_back({{c + e, c + e + nk, c + n + ek, c + n}});
  p.segments.push_back({{c + n, c + n - ek, c - e + nk, c - e}});
  p.segments.push_back({{c - e, c - e - nk, c - n - ek, c - n}});
  p.segments.push_back({{c - n, c - n + ek, c + e - nk, c + e}});
  return p;
}

inline double directed_hausdorff(const BinaryMask& a, const BinaryMask& b) {
  double worst = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!a.get(x, y)) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int v = 0; v < b.height(); ++v)
        for (int u = 0; u < b.width(); ++u)
          if (b.get(u, v)) best = std::min(best, std::hypot(u - x, v - y));
      worst = std::max(worst, best);
    }
  return worst;
}

inline double hausdorff(const BinaryMask& a, const BinaryMask& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

// Both masks grown by a disk of `radius` px before comparing.
inline double boundary_iou(const BinaryMask& sketch, const BinaryMask& boundary, double radius) {
  return iou(dilate_disk(sketch, radius), dilate_disk(boundary, radius));
}

}  // namespace testshapes
