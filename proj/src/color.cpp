#include "sketchfill/color.hpp"

#include <algorithm>
#include <cmath>

#include "sketchfill/error.hpp"
#include "sketchfill/rng.hpp"

namespace sketchfill {

namespace {

constexpr std::uint64_t kStrokeTag = 0x5354524b;
constexpr std::uint64_t kDropTag = 0x44524f50;

RasterImage as_rgb(const RasterImage& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) throw InvalidArgument("expected a 1- or 3-channel image");
  RasterImage out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y);
  return out;
}

float linf(const Rgb& a, const Rgb& b) {
  return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
}

}  // namespace

LabelMap read_label_map(const std::string& path) {
  const RasterImage img = read_png(path);
  LabelMap out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const long v = std::lround(img.at(x, y, 0) * 255.0f);
      if (v > kMaxLabel) throw FormatError("label value " + std::to_string(v) + " out of range in " + path, 0);
      out.set(x, y, static_cast<std::uint8_t>(v));
    }
  return out;
}

void write_label_map(const LabelMap& labels, const std::string& path) {
  RasterImage img(labels.width, labels.height, 1);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) img.at(x, y) = labels.at(x, y) / 255.0f;
  write_png(img, path);
}

Rgb ColorMap::at_output(int x, int y, int w, int h) const {
  const int s = side();
  const int mx = std::clamp(static_cast<int>(std::floor((x + 0.5) * s / w)), 0, s - 1);
  const int my = std::clamp(static_cast<int>(std::floor((y + 0.5) * s / h)), 0, s - 1);
  return at(mx, my);
}

Rgb median_color(const RasterImage& img, const BinaryMask& select) {
  Rgb out{};
  std::vector<float> vals;
  for (int c = 0; c < 3; ++c) {
    vals.clear();
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        if (select.get(x, y)) vals.push_back(img.at(x, y, std::min(c, img.channels() - 1)));
    if (vals.empty()) throw InvalidArgument("median_color: empty selection");
    const auto mid = vals.begin() + static_cast<std::ptrdiff_t>((vals.size() - 1) / 2);
    std::nth_element(vals.begin(), mid, vals.end());
    out[c] = *mid;
  }
  return out;
}

ColorMap build_color_map(const RasterImage& img, const LabelMap* labels, const ColorMapParams& params) {
  if (img.empty()) throw InvalidArgument("build_color_map: empty image");
  if (labels && (labels->width != img.width() || labels->height != img.height()))
    throw InvalidArgument("label raster is " + std::to_string(labels->width) + "x" + std::to_string(labels->height) +
                          " but the image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()));
  const RasterImage rgb = as_rgb(img);
  RasterImage map = resize(rgb, params.side, params.side);
  map = median_filter(map, params.median_kernel);
  map = bilateral_filter(map, params.sigma_range, params.sigma_domain, params.iterations);
  if (labels) {
    for (int l = 1; l <= kMaxLabel; ++l) {
      BinaryMask select(img.width(), img.height());
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) select.set(x, y, labels->at(x, y) == l);
      if (!select.any()) continue;
      const Rgb med = median_color(rgb, select);
      for (int my = 0; my < params.side; ++my)
        for (int mx = 0; mx < params.side; ++mx) {
          const int sx = std::min(img.width() - 1, static_cast<int>(std::floor((mx + 0.5) * img.width() / params.side)));
          const int sy = std::min(img.height() - 1, static_cast<int>(std::floor((my + 0.5) * img.height() / params.side)));
          if (labels->at(sx, sy) == l)
            for (int c = 0; c < 3; ++c) map.at(mx, my, c) = med[c];
        }
    }
  }
  return ColorMap{std::move(map)};
}

ColorLayer ColorLayer::empty(int width, int height) { return {RasterImage(width, height, 3), BinaryMask(width, height)}; }

bool ColorLayer::invariant_holds() const {
  for (int y = 0; y < height(); ++y)
    for (int x = 0; x < width(); ++x)
      if (!valid.get(x, y))
        for (int c = 0; c < 3; ++c)
          if (rgb.at(x, y, c) != 0.0f) return false;
  return true;
}

// ---------------------------------------------------------------------------------------------
// Pupil localization

double iris_radius(int side) { return 10.0 * side / 512.0; }

Rect eye_box(Point eye, int width, int height) {
  const int side = std::max(width, height);
  const int hw = std::max(4, static_cast<int>(std::lround(0.09 * side)));
  const int hh = std::max(4, static_cast<int>(std::lround(0.06 * side)));
  const int cx = static_cast<int>(std::lround(eye.x)), cy = static_cast<int>(std::lround(eye.y));
  Rect r{cx - hw, cy - hh, cx + hw, cy + hh};
  const auto shift = [](int& lo, int& hi, int limit) {
    if (lo < 0) hi -= lo, lo = 0;
    if (hi > limit) lo -= hi - limit, hi = limit;
    lo = std::max(lo, 0);
  };
  shift(r.x0, r.x1, width);
  shift(r.y0, r.y1, height);
  return r;
}

std::vector<double> pupil_objective(const RasterImage& img, const Rect& box) {
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > img.width() || box.y1 > img.height())
    throw InvalidArgument("pupil search box lies outside the image");
  if (box.width() < 8 || box.height() < 8) throw InvalidArgument("pupil search box must be at least 8x8");
  const RasterImage gray = img.channels() == 1 ? img : to_grayscale(img);

  struct Vote {
    double x, y, gx, gy;
  };
  std::vector<Vote> all;
  double sum = 0.0, sum2 = 0.0, peak = 0.0;
  for (int y = box.y0; y < box.y1; ++y)
    for (int x = box.x0; x < box.x1; ++x) {
      const double gx = 0.5 * (gray.clamped(x + 1, y) - gray.clamped(x - 1, y));
      const double gy = 0.5 * (gray.clamped(x, y + 1) - gray.clamped(x, y - 1));
      const double m = std::hypot(gx, gy);
      sum += m;
      sum2 += m * m;
      peak = std::max(peak, m);
      all.push_back({double(x), double(y), gx, gy});
    }
  if (peak < 1e-6) throw NoPupilError("no image gradients inside the eye search box");
  const double n = static_cast<double>(all.size());
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
  const double threshold = mean + 0.3 * sd;
  std::vector<Vote> votes;
  for (const Vote& v : all) {
    const double m = std::hypot(v.gx, v.gy);
    if (m > threshold && m > 1e-9) votes.push_back({v.x, v.y, v.gx / m, v.gy / m});
  }
  if (votes.empty()) throw NoPupilError("no gradients above threshold inside the eye search box");

  std::vector<double> obj;
  obj.reserve(all.size());
  for (int cy = box.y0; cy < box.y1; ++cy)
    for (int cx = box.x0; cx < box.x1; ++cx) {
      double acc = 0.0;
      for (const Vote& v : votes) {
        const double dx = v.x - cx, dy = v.y - cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 == 0.0) continue;
        const double e = dx * v.gx + dy * v.gy;
        acc += e * e / d2;
      }
      obj.push_back(acc / static_cast<double>(votes.size()));
    }
  return obj;
}

IrisEstimate locate_pupil(const RasterImage& img, const Rect& box) {
  const auto obj = pupil_objective(img, box);
  const auto best = static_cast<int>(std::max_element(obj.begin(), obj.end()) - obj.begin());
  IrisEstimate est;
  est.center = {double(box.x0 + best % box.width()), double(box.y0 + best / box.width())};
  const double rc = 8.0 * box.height() / 64.0;
  BinaryMask circle(img.width(), img.height());
  const int r = static_cast<int>(std::ceil(rc));
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int x = static_cast<int>(est.center.x) + dx, y = static_cast<int>(est.center.y) + dy;
      if (circle.inside(x, y) && dx * dx + dy * dy <= rc * rc) circle.set(x, y);
    }
  est.color = median_color(as_rgb(img), circle);
  est.radius = iris_radius(img.width());
  return est;
}

// ---------------------------------------------------------------------------------------------
// Strokes

StrokeParams StrokeParams::from_config(const Config& cfg) {
  StrokeParams p;
  p.count_min = cfg.get_int("color.count_min", p.count_min);
  p.count_max = cfg.get_int("color.count_max", p.count_max);
  p.length_min = cfg.get_double("color.length_min", p.length_min);
  p.length_max = cfg.get_double("color.length_max", p.length_max);
  p.thickness_min = cfg.get_double("color.thickness_min", p.thickness_min);
  p.thickness_max = cfg.get_double("color.thickness_max", p.thickness_max);
  p.jitter_min = cfg.get_double("color.jitter_min", p.jitter_min);
  p.jitter_max = cfg.get_double("color.jitter_max", p.jitter_max);
  p.deviation = cfg.get_double("color.deviation", p.deviation);
  if (p.count_min < 0 || p.count_max < p.count_min) throw InvalidArgument("color.count range is empty");
  if (p.length_min <= 0 || p.length_max < p.length_min) throw InvalidArgument("color.length range is empty");
  if (p.thickness_min <= 0 || p.thickness_max < p.thickness_min) throw InvalidArgument("color.thickness range is empty");
  if (p.jitter_min < 0 || p.jitter_max < p.jitter_min) throw InvalidArgument("color.jitter range is empty");
  if (!(p.deviation > 0)) throw InvalidArgument("color.deviation must be positive");
  return p;
}

void StrokeParams::write_to(Config& cfg) const {
  cfg.set("color.count_min", std::to_string(count_min));
  cfg.set("color.count_max", std::to_string(count_max));
  cfg.set("color.length_min", std::to_string(length_min));
  cfg.set("color.length_max", std::to_string(length_max));
  cfg.set("color.thickness_min", std::to_string(thickness_min));
  cfg.set("color.thickness_max", std::to_string(thickness_max));
  cfg.set("color.jitter_min", std::to_string(jitter_min));
  cfg.set("color.jitter_max", std::to_string(jitter_max));
  cfg.set("color.deviation", std::to_string(deviation));
}

std::vector<StrokeWalk> plan_strokes(const ColorMap& map, std::uint64_t seed, const StrokeParams& p) {
  Rng rng(derive_seed(seed, {kStrokeTag}));
  const int side = map.side();
  const int count = uniform_int(rng, p.count_min, p.count_max);
  std::vector<StrokeWalk> strokes;
  for (int s = 0; s < count; ++s) {
    const Point start{uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
    const double length = uniform(rng, p.length_min, p.length_max);
    const double theta = uniform(rng, 0.0, 2.0 * M_PI);
    const double thickness = uniform(rng, p.thickness_min, p.thickness_max);
    const double jitter = uniform(rng, p.jitter_min, p.jitter_max);
    const int n = std::max(1, static_cast<int>(std::ceil(length)));
    std::vector<double> offsets(n + 1, 0.0);
    for (int k = 1; k <= n; ++k) offsets[k] = offsets[k - 1] + uniform(rng, -1.0, 1.0) * jitter;

    StrokeWalk walk;
    walk.radius = 0.5 * thickness;
    walk.planned = n + 1;
    const Point dir{std::cos(theta), std::sin(theta)}, normal{-dir.y, dir.x};
    const auto pixel = [side](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, side - 1); };
    walk.color = map.at(pixel(start.x), pixel(start.y));
    for (int k = 0; k <= n; ++k) {
      Point q = start + (length * k / n) * dir + offsets[k] * normal;
      q.x = std::clamp(q.x, 0.0, std::nextafter(static_cast<double>(side), 0.0));
      q.y = std::clamp(q.y, 0.0, std::nextafter(static_cast<double>(side), 0.0));
      if (linf(map.at(pixel(q.x), pixel(q.y)), walk.color) > p.deviation) break;
      walk.samples.push_back(q);
    }
    strokes.push_back(std::move(walk));
  }
  return strokes;
}

ColorLayer render_strokes(const std::vector<StrokeWalk>& strokes, const ColorMap& map, int width, int height,
                          double deviation) {
  ColorLayer layer = ColorLayer::empty(width, height);
  const double sx = static_cast<double>(width) / map.side(), sy = static_cast<double>(height) / map.side();
  for (const StrokeWalk& s : strokes) {
    const double r = s.radius * std::min(sx, sy);
    for (const Point& q : s.samples) {
      // Map coordinates treat pixel (i, j) as the unit square [i, i+1) x [j, j+1).
      const double ox = q.x * sx - 0.5, oy = q.y * sy - 0.5;
      const int x0 = static_cast<int>(std::floor(ox - r)), x1 = static_cast<int>(std::ceil(ox + r));
      const int y0 = static_cast<int>(std::floor(oy - r)), y1 = static_cast<int>(std::ceil(oy + r));
      for (int y = std::max(0, y0); y <= std::min(height - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(width - 1, x1); ++x) {
          if ((x - ox) * (x - ox) + (y - oy) * (y - oy) > r * r) continue;
          if (linf(map.at_output(x, y, width, height), s.color) > deviation) continue;
          for (int c = 0; c < 3; ++c) layer.rgb.at(x, y, c) = s.color[c];
          layer.valid.set(x, y);
        }
    }
  }
  return layer;
}

ColorLayer synth_strokes(const ColorMap& map, std::uint64_t seed, const StrokeParams& params, int width, int height) {
  return render_strokes(plan_strokes(map, seed, params), map, width, height, params.deviation);
}

ColorLayer draw_iris(const ColorLayer& layer, const IrisEstimate& iris) {
  if (!(iris.radius > 0.0)) throw InvalidArgument("iris radius must be positive");
  if (iris.center.x < 0 || iris.center.y < 0 || iris.center.x >= layer.width() || iris.center.y >= layer.height())
    throw InvalidArgument("iris center lies outside the image");
  ColorLayer out = layer;
  const double r = iris.radius;
  const int x0 = static_cast<int>(std::floor(iris.center.x - r)), x1 = static_cast<int>(std::ceil(iris.center.x + r));
  const int y0 = static_cast<int>(std::floor(iris.center.y - r)), y1 = static_cast<int>(std::ceil(iris.center.y + r));
  for (int y = std::max(0, y0); y <= std::min(out.height() - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(out.width() - 1, x1); ++x) {
      const double dx = x - iris.center.x, dy = y - iris.center.y;
      if (dx * dx + dy * dy > r * r) continue;
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = iris.color[c];
      out.valid.set(x, y);
    }
  return out;
}

void paint_stroke(ColorLayer& layer, const Polyline& points, const Rgb& color, double thickness) {
  if (points.empty()) return;
  const double r = 0.5 * thickness;
  const auto dab = [&](Point q) {
    const int cx = static_cast<int>(std::floor(q.x + 0.5)), cy = static_cast<int>(std::floor(q.y + 0.5));
    const int x0 = static_cast<int>(std::floor(q.x - r)), x1 = static_cast<int>(std::ceil(q.x + r));
    const int y0 = static_cast<int>(std::floor(q.y - r)), y1 = static_cast<int>(std::ceil(q.y + r));
    for (int y = std::min(y0, cy); y <= std::max(y1, cy); ++y)
      for (int x = std::min(x0, cx); x <= std::max(x1, cx); ++x) {
        if (!layer.valid.inside(x, y)) continue;
        const bool nearest = x == cx && y == cy;
        if (!nearest && (x - q.x) * (x - q.x) + (y - q.y) * (y - q.y) > r * r) continue;
        for (int c = 0; c < 3; ++c) layer.rgb.at(x, y, c) = color[c];
        layer.valid.set(x, y);
      }
  };
  dab(points[0]);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Point a = points[i - 1], b = points[i];
    const int n = std::max(1, static_cast<int>(std::ceil(distance(a, b) / 0.25)));
    for (int k = 1; k <= n; ++k) dab(a + (static_cast<double>(k) / n) * (b - a));
  }
}

bool color_dropped(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kDropTag}));
  return (rng() >> 63) != 0;
}

ColorLayer maybe_drop_color(const ColorLayer& layer, std::uint64_t seed) {
  return color_dropped(seed) ? ColorLayer::empty(layer.width(), layer.height()) : layer;
}

}  // namespace sketchfill
