#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "sketchfill/color.hpp"
#include "sketchfill/error.hpp"
#include "test_shapes.hpp"

using namespace sketchfill;

namespace {

// Independent evaluation of the pupil objective for every candidate, returning the argmax.
Point exhaustive_pupil(const RasterImage& img, const Rect& box) {
  const RasterImage g = to_grayscale(img);
  std::vector<std::array<double, 4>> grads;
  std::vector<double> mags;
  for (int y = box.y0; y < box.y1; ++y)
    for (int x = box.x0; x < box.x1; ++x) {
      const double gx = 0.5 * (g.clamped(x + 1, y) - g.clamped(x - 1, y));
      const double gy = 0.5 * (g.clamped(x, y + 1) - g.clamped(x, y - 1));
      grads.push_back({double(x), double(y), gx, gy});
      mags.push_back(std::hypot(gx, gy));
    }
  double mean = 0, var = 0;
  for (double m : mags) mean += m;
  mean /= mags.size();
  for (double m : mags) var += (m - mean) * (m - mean);
  const double thr = mean + 0.3 * std::sqrt(var / mags.size());
  double best = -1;
  Point arg;
  for (int cy = box.y0; cy < box.y1; ++cy)
    for (int cx = box.x0; cx < box.x1; ++cx) {
      double acc = 0;
      int n = 0;
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (mags[i] <= thr) continue;
        ++n;
        const double dx = grads[i][0] - cx, dy = grads[i][1] - cy;
        const double dn = std::hypot(dx, dy);
        if (dn == 0) continue;
        const double e = (dx * grads[i][2] + dy * grads[i][3]) / (dn * mags[i]);
        acc += e * e;
      }
      if (acc / n > best) best = acc / n, arg = {double(cx), double(cy)};
    }
  return arg;
}

RasterImage two_tone(int w, int h, Rgb left, Rgb right) {
  RasterImage img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = x < w / 2 ? left[c] : right[c];
  return img;
}

}  // namespace

TEST_CASE("color map of a constant image is that constant") {
  const RasterImage img(64, 64, 3, 0.25f);
  const ColorMap map = build_color_map(img);
  CHECK(map.side() == 128);
  CHECK(map.rgb.height() == 128);
  for (float v : map.rgb.data()) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));
}

TEST_CASE("labeled region becomes exactly its median color") {
  const Rgb a{0.8f, 0.3f, 0.1f}, b{0.2f, 0.4f, 0.9f};
  const RasterImage img = two_tone(64, 64, a, b);
  LabelMap labels(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 32; ++x) labels.set(x, y, 1);
  const ColorMap map = build_color_map(img, &labels);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) CHECK(map.rgb.at(x, y, c) == a[c]);
  CHECK_THROWS_AS(build_color_map(img, std::make_unique<LabelMap>(32, 32).get()), InvalidArgument);
}

TEST_CASE("color map flattens regions and keeps edges") {
  // Four horizontal bands with mild noise. Bands avoid four-tile corners, which the 3x3 median
  // legitimately rounds off.
  const float palette[4][3] = {{0.9f, 0.2f, 0.2f}, {0.2f, 0.7f, 0.3f}, {0.2f, 0.3f, 0.85f}, {0.9f, 0.85f, 0.3f}};
  std::mt19937_64 rng(1);
  std::normal_distribution<float> noise(0.0f, 0.02f);
  RasterImage img(128, 128, 3);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(palette[y / 32][c] + noise(rng), 0.0f, 1.0f);
  const ColorMap map = build_color_map(img);
  for (int band = 0; band < 4; ++band)
    for (int c = 0; c < 3; ++c) {
      double mean = 0, sq = 0;
      for (int y = band * 32; y < band * 32 + 32; ++y)
        for (int x = 0; x < 128; ++x) {
          mean += map.rgb.at(x, y, c);
          sq += double(map.rgb.at(x, y, c)) * map.rgb.at(x, y, c);
        }
      const double n = 32 * 128;
      CHECK(sq / n - (mean / n) * (mean / n) < 1e-4);
    }
  double jump = 0;
  int n = 0;
  for (int b = 32; b < 128; b += 32)
    for (int x = 0; x < 128; ++x, ++n)
      for (int c = 0; c < 3; ++c) jump += std::abs(map.rgb.at(x, b, c) - map.rgb.at(x, b - 1, c)) / 3.0;
  CHECK(jump / n > 0.1);
}

TEST_CASE("median_color uses the lower middle element") {
  RasterImage img(4, 1, 3);
  const float vals[4] = {0.4f, 0.1f, 0.3f, 0.2f};
  for (int x = 0; x < 4; ++x)
    for (int c = 0; c < 3; ++c) img.at(x, 0, c) = vals[x];
  const Rgb m = median_color(img, BinaryMask(4, 1, true));
  CHECK(m[0] == 0.2f);
}

TEST_CASE("pupil localization on a dark disk matches the exhaustive objective") {
  const RasterImage img = testshapes::disk_image(40, 40, 20, 20, 5, 0.05f, 0.9f);
  const Rect box{0, 0, 40, 40};
  const IrisEstimate est = locate_pupil(img, box);
  CHECK(distance(est.center, {20, 20}) <= 2.0);
  CHECK(est.center == exhaustive_pupil(img, box));
  CHECK(est.color[0] == doctest::Approx(0.05f));
  CHECK(est.radius > 0);
}

TEST_CASE("pupil objective is sign invariant") {
  const RasterImage bright = testshapes::disk_image(40, 40, 17, 22, 6, 0.95f, 0.1f);
  const Rect box{4, 6, 36, 38};
  const IrisEstimate est = locate_pupil(bright, box);
  CHECK(distance(est.center, {17, 22}) <= 2.0);
  CHECK(est.center == exhaustive_pupil(bright, box));
  RasterImage inv = bright;
  for (float& v : inv.data()) v = 1.0f - v;
  CHECK(locate_pupil(inv, box).center == est.center);
}

TEST_CASE("pupil: uniform box and bad boxes are rejected") {
  const RasterImage flat(32, 32, 3, 0.5f);
  CHECK_THROWS_AS(locate_pupil(flat, {0, 0, 16, 16}), NoPupilError);
  CHECK_THROWS_AS(locate_pupil(flat, {0, 0, 6, 16}), InvalidArgument);
  CHECK_THROWS_AS(locate_pupil(flat, {20, 20, 40, 40}), InvalidArgument);
}

TEST_CASE("pupil localization on synthetic faces") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const SynthFace face = synth_face(128, seed, true);
    for (const Point eye : {face.left_eye, face.right_eye}) {
      const IrisEstimate est = locate_pupil(face.image, eye_box(eye, 128, 128));
      CHECK(distance(est.center, eye) <= 2.0);
    }
  }
}

TEST_CASE("stroke synthesis: empty count range") {
  const ColorMap map{RasterImage(128, 128, 3, 0.5f)};
  StrokeParams p;
  p.count_min = p.count_max = 0;
  const ColorLayer layer = synth_strokes(map, 7, p, 64, 64);
  CHECK(layer.valid.count() == 0);
  CHECK(layer == ColorLayer::empty(64, 64));
}

TEST_CASE("stroke synthesis on a constant map runs full length in the map color") {
  const ColorMap map{RasterImage(128, 128, 3, 0.6f)};
  StrokeParams p;
  p.count_min = 3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = plan_strokes(map, seed, p);
    for (const auto& s : plan) CHECK(static_cast<int>(s.samples.size()) == s.planned);
    const ColorLayer layer = render_strokes(plan, map, 64, 64, p.deviation);
    CHECK(layer.valid.any());
    CHECK(layer.invariant_holds());
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (layer.valid.get(x, y))
          for (int c = 0; c < 3; ++c) CHECK(layer.rgb.at(x, y, c) == 0.6f);
  }
}

TEST_CASE("strokes stop at a color boundary") {
  const Rgb a{0.9f, 0.1f, 0.1f}, b{0.1f, 0.1f, 0.9f};
  const ColorMap map{two_tone(128, 128, a, b)};
  StrokeParams p;
  p.count_min = 8;
  p.deviation = 0.3;
  int crossed_plan = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto plan = plan_strokes(map, seed, p);
    for (const auto& s : plan) {
      const bool in_a = s.color == a;
      // Replay: every accepted sample lies on the start side; the next planned sample did not.
      for (const Point& q : s.samples) CHECK((q.x < 64) == in_a);
      crossed_plan += static_cast<int>(s.samples.size()) < s.planned;
    }
    const ColorLayer layer = render_strokes(plan, map, 64, 64, p.deviation);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (!layer.valid.get(x, y)) continue;
        const Rgb col{layer.rgb.at(x, y, 0), layer.rgb.at(x, y, 1), layer.rgb.at(x, y, 2)};
        CHECK(col == (x < 32 ? a : b));
      }
  }
  CHECK(crossed_plan > 0);
}

TEST_CASE("stroke colors are always map values at stroke starts") {
  const SynthFace face = synth_face(64, 3);
  const ColorMap map = build_color_map(face.image);
  std::set<std::array<float, 3>> values;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) values.insert(map.at(x, y));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ColorLayer layer = synth_strokes(map, seed, StrokeParams{}, 64, 64);
    CHECK(layer.invariant_holds());
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (layer.valid.get(x, y)) CHECK(values.count({layer.rgb.at(x, y, 0), layer.rgb.at(x, y, 1), layer.rgb.at(x, y, 2)}));
  }
  CHECK(synth_strokes(map, 4, StrokeParams{}, 64, 64) == synth_strokes(map, 4, StrokeParams{}, 64, 64));
}

TEST_CASE("draw_iris is the analytic disk") {
  IrisEstimate iris{{32, 32}, {0.2f, 0.5f, 0.7f}, iris_radius(512)};
  CHECK(iris.radius == 10.0);
  CHECK(iris_radius(256) == 5.0);
  const ColorLayer layer = draw_iris(ColorLayer::empty(64, 64), iris);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool inside = (x - 32) * (x - 32) + (y - 32) * (y - 32) <= 100;
      CHECK(layer.valid.get(x, y) == inside);
      CHECK(layer.rgb.at(x, y, 1) == (inside ? 0.5f : 0.0f));
    }
  const IrisEstimate other{{10, 12}, {0.9f, 0.9f, 0.1f}, 4};
  CHECK(draw_iris(draw_iris(ColorLayer::empty(64, 64), iris), other) ==
        draw_iris(draw_iris(ColorLayer::empty(64, 64), other), iris));
  CHECK_THROWS_AS(draw_iris(layer, IrisEstimate{{70, 3}, {}, 3}), InvalidArgument);
}

TEST_CASE("color dropout happens half the time") {
  const ColorLayer layer = draw_iris(ColorLayer::empty(16, 16), {{8, 8}, {1, 0, 0}, 3});
  int dropped = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) dropped += maybe_drop_color(layer, seed).valid.count() == 0;
  CHECK(std::abs(dropped / 10000.0 - 0.5) <= 0.02);
  CHECK(maybe_drop_color(layer, 42) == maybe_drop_color(layer, 42));
  const ColorLayer empty = ColorLayer::empty(16, 16);
  CHECK(maybe_drop_color(empty, 1) == empty);
  CHECK(maybe_drop_color(empty, 2) == empty);
}

TEST_CASE("stroke parameters from config") {
  Config c;
  c.set("color.count_max", "3");
  CHECK(StrokeParams::from_config(c).count_max == 3);
  c.set("color.count_min", "5");
  CHECK_THROWS_AS(StrokeParams::from_config(c), InvalidArgument);
}

TEST_CASE("paint_stroke draws a thick line and keeps the layer invariant") {
  ColorLayer layer = ColorLayer::empty(32, 32);
  paint_stroke(layer, {{4, 4}, {20, 4}}, {0.1f, 0.2f, 0.3f}, 3);
  CHECK(layer.valid.get(4, 4));
  CHECK(layer.valid.get(20, 5));
  CHECK_FALSE(layer.valid.get(12, 7));
  CHECK(layer.invariant_holds());
}
