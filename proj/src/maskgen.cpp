#include "sketchfill/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sketchfill/error.hpp"
#include "sketchfill/rng.hpp"

namespace sketchfill {

MaskParams MaskParams::from_config(const Config& cfg) {
  MaskParams p;
  p.min_frac = cfg.get_double("mask.min_frac", p.min_frac);
  p.max_frac = cfg.get_double("mask.max_frac", p.max_frac);
  p.max_angle = cfg.get_double("mask.max_angle", p.max_angle);
  p.axis_aligned = cfg.get_bool("mask.axis_aligned", p.axis_aligned);
  if (!(p.min_frac > 0) || p.max_frac < p.min_frac || p.max_frac > 1)
    throw InvalidArgument("mask.min_frac/max_frac must satisfy 0 < min <= max <= 1");
  if (p.max_angle < 0 || p.max_angle > 45) throw InvalidArgument("mask.max_angle must be in [0,45]");
  return p;
}

void MaskParams::write_to(Config& cfg) const {
  cfg.set("mask.min_frac", std::to_string(min_frac));
  cfg.set("mask.max_frac", std::to_string(max_frac));
  cfg.set("mask.max_angle", std::to_string(max_angle));
  cfg.set("mask.axis_aligned", axis_aligned ? "true" : "false");
}

BinaryMask rasterize_mask(const MaskSpec& spec, int width, int height) {
  BinaryMask m(width, height);
  const double a = spec.angle * std::numbers::pi / 180.0;
  // Exact for angle 0 so axis-aligned masks have no rounding noise.
  const double c = spec.angle == 0 ? 1.0 : std::cos(a), s = spec.angle == 0 ? 0.0 : std::sin(a);
  const double hw = spec.width / 2, hh = spec.height / 2;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = x - spec.cx, dy = y - spec.cy;
      const double u = c * dx + s * dy, v = -s * dx + c * dy;
      if (u > -hw && u <= hw && v > -hh && v <= hh) m.set(x, y);
    }
  return m;
}

std::pair<MaskSpec, BinaryMask> sample_mask(int width, int height, std::uint64_t seed, const MaskParams& params) {
  if (width < 32 || height < 32) throw InvalidArgument("sample_mask needs an image of at least 32x32");
  Rng rng(derive_seed(seed, {0x6d61736b}));
  const int side = std::min(width, height);
  MaskSpec spec;
  spec.width = uniform(rng, params.min_frac, params.max_frac) * side;
  spec.height = uniform(rng, params.min_frac, params.max_frac) * side;
  spec.angle = params.axis_aligned ? 0.0 : uniform(rng, 0.0, params.max_angle);
  const double a = spec.angle * std::numbers::pi / 180.0;
  const double ex = 0.5 * (spec.width * std::cos(a) + spec.height * std::sin(a));
  const double ey = 0.5 * (spec.width * std::sin(a) + spec.height * std::cos(a));
  spec.cx = uniform(rng, ex, width - 1 - ex);
  spec.cy = uniform(rng, ey, height - 1 - ey);
  return {spec, rasterize_mask(spec, width, height)};
}

std::pair<MaskSpec, BinaryMask> sample_mask(int width, int height, std::uint64_t seed, bool axis_aligned_only) {
  MaskParams p;
  p.axis_aligned = axis_aligned_only;
  return sample_mask(width, height, seed, p);
}

BinaryMask normalize_user_mask(const BinaryMask& raw) {
  if (!raw.any()) throw InvalidArgument("mask is empty");
  return erode(dilate(raw, 1), 1, true);
}

std::pair<double, double> mask_centroid(const BinaryMask& mask) {
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.get(x, y)) sx += x, sy += y, ++n;
  if (n == 0) return {(mask.width() - 1) / 2.0, (mask.height() - 1) / 2.0};
  return {sx / n, sy / n};
}

Rect local_crop_box(const BinaryMask& mask, int crop) {
  if (crop <= 0 || crop > mask.width() || crop > mask.height())
    throw InvalidArgument("crop size must be in [1, image side]");
  const auto [cx, cy] = mask_centroid(mask);
  // Centroid of a centered mask on an even side is side/2 - 0.5; +0.5 maps it back to side/2.
  const int x0 = std::clamp(static_cast<int>(std::floor(cx + 0.5 - crop / 2.0 + 0.5)), 0, mask.width() - crop);
  const int y0 = std::clamp(static_cast<int>(std::floor(cy + 0.5 - crop / 2.0 + 0.5)), 0, mask.height() - crop);
  return {x0, y0, x0 + crop, y0 + crop};
}

}  // namespace sketchfill
