#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "sketchfill/error.hpp"
#include "sketchfill/maskgen.hpp"

using namespace sketchfill;

TEST_CASE("axis-aligned rectangle follows the half-open center rule") {
  const BinaryMask m = rasterize_mask({32, 32, 16, 8, 0}, 64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) CHECK(m.get(x, y) == (x >= 25 && x <= 40 && y >= 29 && y <= 36));
}

TEST_CASE("rotated square keeps its area") {
  // Lattice error scales with the perimeter; at 45 degrees a 16 px square can be 5% off, so the
  // 2% bound is checked from 32 px up (the smallest mask at 128 px and every mask at 512 px).
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  for (double side : {32.0, 64.0, 128.0, 256.0})
    for (int t = 0; t < 4; ++t) {
      const double off = t == 0 ? 0.0 : frac(rng);
      const BinaryMask m = rasterize_mask({256 + off, 256 + frac(rng) * (t != 0), side, side, 45}, 512, 512);
      CHECK(std::abs(double(m.count()) - side * side) <= 0.02 * side * side);
    }
}

TEST_CASE("rotated mask membership matches a direct oracle") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const MaskSpec s{20 + double(rng() % 24), 20 + double(rng() % 24), 10 + double(rng() % 12),
                     8 + double(rng() % 12), double(rng() % 4500) / 100};
    const BinaryMask m = rasterize_mask(s, 64, 64);
    const double a = s.angle * M_PI / 180;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double u = (x - s.cx) * std::cos(a) + (y - s.cy) * std::sin(a);
        const double v = -(x - s.cx) * std::sin(a) + (y - s.cy) * std::cos(a);
        const bool in = std::abs(u) < s.width / 2 - 1e-9 && std::abs(v) < s.height / 2 - 1e-9;
        const bool out = std::abs(u) > s.width / 2 + 1e-9 || std::abs(v) > s.height / 2 + 1e-9;
        if (in) CHECK(m.get(x, y));
        if (out) CHECK_FALSE(m.get(x, y));
      }
  }
}

TEST_CASE("sample_mask: determinism, axis-aligned flag, size range, area") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto [spec, mask] = sample_mask(64, 64, seed, false);
    const auto again = sample_mask(64, 64, seed, false);
    CHECK(again.first == spec);
    CHECK(again.second == mask);
    CHECK(spec.angle >= 0.0);
    CHECK(spec.angle <= 45.0);
    CHECK(spec.width >= 16.0);
    CHECK(spec.width <= 32.0);
    CHECK(spec.height >= 16.0);
    CHECK(spec.height <= 32.0);
    const double ratio = mask.count() / (spec.width * spec.height);
    CHECK(ratio >= 0.9);
    CHECK(ratio <= 1.1);
    CHECK(sample_mask(64, 64, seed, true).first.angle == 0.0);
  }
  CHECK_THROWS_AS(sample_mask(31, 64, 1, false), InvalidArgument);
}

TEST_CASE("sampled masks lie fully inside the image") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto [spec, mask] = sample_mask(48, 40, seed, false);
    // Corners of the rotated rectangle.
    const double a = spec.angle * M_PI / 180;
    for (int sx : {-1, 1})
      for (int sy : {-1, 1}) {
        const double x = spec.cx + sx * spec.width / 2 * std::cos(a) - sy * spec.height / 2 * std::sin(a);
        const double y = spec.cy + sx * spec.width / 2 * std::sin(a) + sy * spec.height / 2 * std::cos(a);
        CHECK(x >= -1e-9);
        CHECK(x <= 47 + 1e-9);
        CHECK(y >= -1e-9);
        CHECK(y <= 39 + 1e-9);
      }
  }
}

TEST_CASE("angles are uniform on [0,45] (Kolmogorov-Smirnov)") {
  std::vector<double> a;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) a.push_back(sample_mask(32, 32, seed, false).first.angle);
  std::sort(a.begin(), a.end());
  double d = 0;
  const double n = a.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = a[i] / 45.0;
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  // Critical value for p = 0.01.
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("normalize_user_mask") {
  BinaryMask blob(9, 9);
  for (int y = 2; y < 7; ++y)
    for (int x = 2; x < 7; ++x) blob.set(x, y);
  CHECK(normalize_user_mask(blob) == blob);

  BinaryMask holed = blob;
  holed.set(4, 4, false);
  CHECK(normalize_user_mask(holed) == blob);

  // Touching the border keeps the border pixels.
  BinaryMask corner(6, 6);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) corner.set(x, y);
  CHECK(normalize_user_mask(corner) == corner);

  CHECK_THROWS_AS(normalize_user_mask(BinaryMask(5, 5)), InvalidArgument);
}

TEST_CASE("closing oracle on random masks") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    BinaryMask m(7, 6);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 7; ++x) m.set(x, y, rng() % 3 == 0);
    if (!m.any()) continue;
    const BinaryMask got = normalize_user_mask(m);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 7; ++x) {
        // Closed iff every in-image pixel of the 3x3 window is in the dilation.
        bool all = true;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int qx = x + dx, qy = y + dy;
            if (!m.inside(qx, qy)) continue;
            bool dil = false;
            for (int ey = -1; ey <= 1; ++ey)
              for (int ex = -1; ex <= 1; ++ex)
                if (m.inside(qx + ex, qy + ey) && m.get(qx + ex, qy + ey)) dil = true;
            all = all && dil;
          }
        CHECK(got.get(x, y) == all);
        if (m.get(x, y)) CHECK(got.get(x, y));
      }
  }
}

TEST_CASE("local_crop_box") {
  BinaryMask centered(512, 512);
  for (int y = 192; y < 320; ++y)
    for (int x = 192; x < 320; ++x) centered.set(x, y);
  CHECK(local_crop_box(centered, 256) == Rect{128, 128, 384, 384});

  BinaryMask corner(512, 512);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) corner.set(x, y);
  CHECK(local_crop_box(corner, 256) == Rect{0, 0, 256, 256});
  BinaryMask far(512, 512);
  far.set(511, 511);
  CHECK(local_crop_box(far, 256) == Rect{256, 256, 512, 512});
  CHECK_THROWS_AS(local_crop_box(far, 513), InvalidArgument);
}

TEST_CASE("centroid matches direct summation and crop boxes stay inside") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto [spec, mask] = sample_mask(64, 64, rng(), false);
    double sx = 0, sy = 0, n = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (mask.get(x, y)) sx += x, sy += y, ++n;
    const auto [cx, cy] = mask_centroid(mask);
    CHECK(cx == doctest::Approx(sx / n).epsilon(1e-12));
    CHECK(cy == doctest::Approx(sy / n).epsilon(1e-12));
    const Rect box = local_crop_box(mask, 32);
    CHECK(box.width() == 32);
    CHECK(box.height() == 32);
    CHECK(box.x0 >= 0);
    CHECK(box.y0 >= 0);
    CHECK(box.x1 <= 64);
    CHECK(box.y1 <= 64);
    if (box.x0 > 0 && box.x1 < 64) CHECK(std::abs(box.x0 + 16 - (cx + 0.5)) <= 0.5);
  }
}

TEST_CASE("mask config") {
  Config cfg;
  cfg.set("mask.axis_aligned", "true");
  cfg.set("mask.min_frac", "0.3");
  const MaskParams p = MaskParams::from_config(cfg);
  CHECK(p.axis_aligned);
  CHECK(p.min_frac == 0.3);
  Config out;
  p.write_to(out);
  CHECK(MaskParams::from_config(out).min_frac == doctest::Approx(0.3));
  cfg.set("mask.max_frac", "0.2");
  CHECK_THROWS_AS(MaskParams::from_config(cfg), InvalidArgument);
}
