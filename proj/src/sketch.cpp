#include "sketchfill/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <unordered_set>

#include "sketchfill/error.hpp"

namespace sketchfill {

double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
double norm(Point a) { return std::hypot(a.x, a.y); }
double distance(Point a, Point b) { return norm(a - b); }

namespace {

Point normalized(Point a) {
  const double n = norm(a);
  return n > 0.0 ? (1.0 / n) * a : Point{0.0, 0.0};
}

}  // namespace

Point CubicSegment::eval(double t) const {
  const double s = 1.0 - t;
  return (s * s * s) * p[0] + (3.0 * s * s * t) * p[1] + (3.0 * s * t * t) * p[2] + (t * t * t) * p[3];
}

Point CubicSegment::derivative(double t) const {
  const double s = 1.0 - t;
  return (3.0 * s * s) * (p[1] - p[0]) + (6.0 * s * t) * (p[2] - p[1]) + (3.0 * t * t) * (p[3] - p[2]);
}

Point CubicSegment::second_derivative(double t) const {
  return (6.0 * (1.0 - t)) * (p[2] - 2.0 * p[1] + p[0]) + (6.0 * t) * (p[3] - 2.0 * p[2] + p[1]);
}

double CubicSegment::hull_length() const {
  return distance(p[0], p[1]) + distance(p[1], p[2]) + distance(p[2], p[3]);
}

// ---------------------------------------------------------------------------------------------
// Edge detection

EdgeDetector parse_edge_detector(const std::string& name) {
  if (name == "gradient") return EdgeDetector::Gradient;
  if (name == "xdog") return EdgeDetector::Xdog;
  if (name == "canny") return EdgeDetector::Canny;
  throw InvalidArgument("unknown edge detector '" + name + "' (expected gradient, xdog or canny)");
}

std::string to_string(EdgeDetector detector) {
  switch (detector) {
    case EdgeDetector::Gradient: return "gradient";
    case EdgeDetector::Xdog: return "xdog";
    case EdgeDetector::Canny: return "canny";
  }
  return "gradient";
}

namespace {

RasterImage gray_of(const RasterImage& img) { return img.channels() == 1 ? img : to_grayscale(img); }

void central_gradient(const RasterImage& g, int x, int y, double& gx, double& gy) {
  gx = 0.5 * (g.clamped(x + 1, y) - g.clamped(x - 1, y));
  gy = 0.5 * (g.clamped(x, y + 1) - g.clamped(x, y - 1));
}

EdgeMap gradient_edges(const RasterImage& gray, const EdgeParams& p) {
  const RasterImage b = gaussian_blur(gray, p.sigma);
  EdgeMap out{gray.width(), gray.height(), std::vector<float>(gray.size())};
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x) {
      double gx, gy;
      central_gradient(b, x, y, gx, gy);
      out.strength[static_cast<std::size_t>(y) * gray.width() + x] =
          static_cast<float>(std::clamp(p.gain * std::hypot(gx, gy), 0.0, 1.0));
    }
  return out;
}

EdgeMap xdog_edges(const RasterImage& gray, const EdgeParams& p) {
  const RasterImage g1 = gaussian_blur(gray, p.sigma);
  const RasterImage g2 = gaussian_blur(gray, p.sigma * p.xdog_k);
  EdgeMap out{gray.width(), gray.height(), std::vector<float>(gray.size())};
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double d = g1.data()[i] - p.xdog_tau * g2.data()[i];
    const double v = d >= p.xdog_eps ? 1.0 : 1.0 + std::tanh(p.xdog_phi * (d - p.xdog_eps));
    out.strength[i] = static_cast<float>(std::clamp(1.0 - v, 0.0, 1.0));
  }
  return out;
}

EdgeMap canny_edges(const RasterImage& gray, const EdgeParams& p) {
  const int w = gray.width(), h = gray.height();
  const RasterImage b = gaussian_blur(gray, p.sigma);
  std::vector<double> mag(gray.size()), gxs(gray.size()), gys(gray.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      central_gradient(b, x, y, gxs[i], gys[i]);
      mag[i] = std::hypot(gxs[i], gys[i]);
    }
  auto m = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return mag[static_cast<std::size_t>(y) * w + x];
  };
  // 0 = suppressed, 1 = weak, 2 = strong
  std::vector<unsigned char> cls(gray.size(), 0);
  std::deque<std::size_t> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      if (mag[i] < p.canny_low) continue;
      double angle = std::atan2(gys[i], gxs[i]) * 180.0 / M_PI;
      if (angle < 0) angle += 180.0;
      int dx, dy;
      if (angle < 22.5 || angle >= 157.5) dx = 1, dy = 0;
      else if (angle < 67.5) dx = 1, dy = 1;
      else if (angle < 112.5) dx = 0, dy = 1;
      else dx = -1, dy = 1;
      if (mag[i] < m(x + dx, y + dy) || mag[i] < m(x - dx, y - dy)) continue;
      cls[i] = mag[i] >= p.canny_high ? 2 : 1;
      if (cls[i] == 2) queue.push_back(i);
    }
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const auto j = static_cast<std::size_t>(ny) * w + nx;
        if (cls[j] == 1) {
          cls[j] = 2;
          queue.push_back(j);
        }
      }
  }
  EdgeMap out{w, h, std::vector<float>(gray.size())};
  for (std::size_t i = 0; i < cls.size(); ++i) out.strength[i] = cls[i] == 2 ? 1.0f : 0.0f;
  return out;
}

}  // namespace

EdgeMap detect_edges(const RasterImage& img, const EdgeParams& params) {
  if (img.empty()) return EdgeMap{img.width(), img.height(), {}};
  const RasterImage gray = gray_of(img);
  switch (params.detector) {
    case EdgeDetector::Gradient: return gradient_edges(gray, params);
    case EdgeDetector::Xdog: return xdog_edges(gray, params);
    case EdgeDetector::Canny: return canny_edges(gray, params);
  }
  throw InvalidArgument("unknown edge detector");
}

// ---------------------------------------------------------------------------------------------
// Thinning and tracing

BinaryMask thin(const BinaryMask& bits) {
  BinaryMask cur = bits;
  const int w = cur.width(), h = cur.height();
  auto px = [&](int x, int y) { return cur.inside(x, y) && cur.get(x, y) ? 1 : 0; };
  std::vector<std::pair<int, int>> removal;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      removal.clear();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!cur.get(x, y)) continue;
          // P2..P9 clockwise from north.
          const int n[8] = {px(x, y - 1), px(x + 1, y - 1), px(x + 1, y), px(x + 1, y + 1),
                            px(x, y + 1), px(x - 1, y + 1), px(x - 1, y), px(x - 1, y - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += n[k];
            if (n[k] == 0 && n[(k + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool cond = pass == 0 ? (n[0] * n[2] * n[4] == 0 && n[2] * n[4] * n[6] == 0)
                                      : (n[0] * n[2] * n[6] == 0 && n[0] * n[4] * n[6] == 0);
          if (cond) removal.emplace_back(x, y);
        }
      for (auto [x, y] : removal) cur.set(x, y, false);
      changed = changed || !removal.empty();
    }
  }
  return cur;
}

namespace {

struct SkeletonGraph {
  const BinaryMask& bits;

  bool on(int x, int y) const { return bits.inside(x, y) && bits.get(x, y); }

  // 4-neighbours always connect; a diagonal connects only when no 4-path joins the two pixels.
  int neighbours(int x, int y, std::array<std::pair<int, int>, 8>& out) const {
    int count = 0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if ((dx == 0 && dy == 0) || !on(x + dx, y + dy)) continue;
        if (dx != 0 && dy != 0 && (on(x + dx, y) || on(x, y + dy))) continue;
        out[count++] = {x + dx, y + dy};
      }
    return count;
  }
};

}  // namespace

std::vector<Polyline> trace(const EdgeMap& edges, double threshold) {
  std::vector<Polyline> result;
  if (edges.strength.empty()) return result;
  const int w = edges.width, h = edges.height;
  BinaryMask bin(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (edges.at(x, y) > threshold) bin.set(x, y);
  const BinaryMask skel = thin(bin);
  const SkeletonGraph graph{skel};

  const auto key = [w](int x, int y) { return static_cast<std::uint64_t>(y) * w + x; };
  const auto edge_key = [&](int ax, int ay, int bx, int by) {
    const auto a = key(ax, ay), b = key(bx, by);
    return std::min(a, b) * (static_cast<std::uint64_t>(w) * h) + std::max(a, b);
  };
  std::unordered_set<std::uint64_t> visited;
  std::array<std::pair<int, int>, 8> nb{};

  const auto walk = [&](int sx, int sy, int nx, int ny) {
    Polyline line{{double(sx), double(sy)}, {double(nx), double(ny)}};
    visited.insert(edge_key(sx, sy, nx, ny));
    int cx = nx, cy = ny;
    while (graph.neighbours(cx, cy, nb) == 2) {
      bool advanced = false;
      for (int k = 0; k < 2; ++k) {
        const auto [tx, ty] = nb[k];
        if (visited.insert(edge_key(cx, cy, tx, ty)).second) {
          cx = tx;
          cy = ty;
          line.push_back({double(cx), double(cy)});
          advanced = true;
          break;
        }
      }
      if (!advanced) break;
    }
    return line;
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!skel.get(x, y)) continue;
      const int deg = graph.neighbours(x, y, nb);
      if (deg == 2) continue;
      const auto starts = nb;
      for (int k = 0; k < deg; ++k) {
        const auto [nx, ny] = starts[k];
        if (visited.count(edge_key(x, y, nx, ny))) continue;
        result.push_back(walk(x, y, nx, ny));
      }
    }
  // What remains are pure cycles.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!skel.get(x, y) || graph.neighbours(x, y, nb) != 2) continue;
      const auto [nx, ny] = nb[0];
      if (visited.count(edge_key(x, y, nx, ny))) continue;
      result.push_back(walk(x, y, nx, ny));
    }
  return result;
}

// ---------------------------------------------------------------------------------------------
// Spline fitting

namespace {

class CurveFitter {
 public:
  // A hair below the bound so rounding in the final distance never crosses it.
  CurveFitter(const Polyline& pts, double max_error) : pts_(pts), err2_(max_error * max_error * (1.0 - 1e-9)) {}

  void fit(std::size_t first, std::size_t last, Point t1, Point t2, std::vector<CubicSegment>& out) const {
    const std::size_t n = last - first + 1;
    const double chord = distance(pts_[first], pts_[last]);
    if (n == 2) {
      out.push_back({{pts_[first], pts_[first] + (chord / 3.0) * t1, pts_[last] + (chord / 3.0) * t2, pts_[last]}});
      return;
    }
    std::vector<double> u = chord_parameters(first, last);
    CubicSegment bez = generate(first, last, u, t1, t2);
    std::size_t split = 0;
    double err = max_error(first, last, bez, u, split);
    if (err <= err2_) {
      out.push_back(bez);
      return;
    }
    if (err <= 16.0 * err2_) {
      for (int it = 0; it < 20; ++it) {
        reparameterize(first, last, bez, u);
        bez = generate(first, last, u, t1, t2);
        std::size_t s = 0;
        err = max_error(first, last, bez, u, s);
        if (err <= err2_) {
          out.push_back(bez);
          return;
        }
        split = s;
      }
    }
    Point center = normalized(pts_[split - 1] - pts_[split + 1]);
    if (norm(center) == 0.0) center = normalized(pts_[split - 1] - pts_[split]);
    fit(first, split, t1, center, out);
    fit(split, last, -1.0 * center, t2, out);
  }

 private:
  std::vector<double> chord_parameters(std::size_t first, std::size_t last) const {
    std::vector<double> u(last - first + 1, 0.0);
    for (std::size_t i = first + 1; i <= last; ++i) u[i - first] = u[i - first - 1] + distance(pts_[i], pts_[i - 1]);
    const double total = u.back();
    for (double& v : u) v = total > 0.0 ? v / total : 0.0;
    return u;
  }

  CubicSegment generate(std::size_t first, std::size_t last, const std::vector<double>& u, Point t1, Point t2) const {
    const Point p0 = pts_[first], p3 = pts_[last];
    double c00 = 0, c01 = 0, c11 = 0, x0 = 0, x1 = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double t = u[i], s = 1.0 - t;
      const double b0 = s * s * s, b1 = 3 * s * s * t, b2 = 3 * s * t * t, b3 = t * t * t;
      const Point a1 = b1 * t1, a2 = b2 * t2;
      c00 += dot(a1, a1);
      c01 += dot(a1, a2);
      c11 += dot(a2, a2);
      const Point tmp = pts_[first + i] - ((b0 + b1) * p0 + (b2 + b3) * p3);
      x0 += dot(a1, tmp);
      x1 += dot(a2, tmp);
    }
    const double det = c00 * c11 - c01 * c01;
    const double chord = distance(p0, p3);
    double al = 0.0, ar = 0.0;
    if (std::abs(det) > 1e-12) {
      al = (x0 * c11 - x1 * c01) / det;
      ar = (c00 * x1 - c01 * x0) / det;
    }
    const double eps = 1e-6 * chord;
    if (al < eps || ar < eps || al > chord || ar > chord) al = ar = chord / 3.0;
    return {{p0, p0 + al * t1, p3 + ar * t2, p3}};
  }

  double max_error(std::size_t first, std::size_t last, const CubicSegment& bez, const std::vector<double>& u,
                   std::size_t& split) const {
    double worst = 0.0;
    split = (first + last) / 2;
    for (std::size_t i = first + 1; i < last; ++i) {
      const Point d = bez.eval(u[i - first]) - pts_[i];
      const double e = dot(d, d);
      if (e >= worst) {
        worst = e;
        split = i;
      }
    }
    return worst;
  }

  void reparameterize(std::size_t first, std::size_t last, const CubicSegment& bez, std::vector<double>& u) const {
    for (std::size_t i = first; i <= last; ++i) {
      double& t = u[i - first];
      const Point d = bez.eval(t) - pts_[i];
      const Point q1 = bez.derivative(t), q2 = bez.second_derivative(t);
      const double den = dot(q1, q1) + dot(d, q2);
      if (std::abs(den) > 1e-12) t = std::clamp(t - dot(d, q1) / den, 0.0, 1.0);
    }
  }

  const Polyline& pts_;
  double err2_;
};

}  // namespace

SplinePath fit_splines(const Polyline& polyline, double max_error) {
  if (polyline.empty()) throw InvalidArgument("fit_splines needs at least one point");
  if (!(max_error > 0.0)) throw InvalidArgument("max_error must be positive");
  Polyline pts;
  for (const Point& p : polyline)
    if (pts.empty() || !(pts.back() == p)) pts.push_back(p);
  SplinePath path;
  path.closed = polyline.size() > 2 && polyline.front() == polyline.back() && pts.size() > 2;
  if (pts.size() == 1) {
    path.segments.push_back({{pts[0], pts[0], pts[0], pts[0]}});
    return path;
  }
  const Point t1 = normalized(pts[1] - pts[0]);
  const Point t2 = normalized(pts[pts.size() - 2] - pts.back());
  CurveFitter(pts, max_error).fit(0, pts.size() - 1, t1, t2, path.segments);
  return path;
}

SplinePath polyline_path(const Polyline& polyline) {
  SplinePath path;
  if (polyline.empty()) return path;
  path.closed = polyline.size() > 2 && polyline.front() == polyline.back();
  if (polyline.size() == 1) {
    path.segments.push_back({{polyline[0], polyline[0], polyline[0], polyline[0]}});
    return path;
  }
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    const Point a = polyline[i], b = polyline[i + 1];
    path.segments.push_back({{a, a + (1.0 / 3.0) * (b - a), a + (2.0 / 3.0) * (b - a), b}});
  }
  return path;
}

// ---------------------------------------------------------------------------------------------
// Pruning and smoothing

double control_bbox_area(const SplinePath& path) {
  if (path.segments.empty()) return 0.0;
  double minx = std::numeric_limits<double>::infinity(), miny = minx;
  double maxx = -minx, maxy = -minx;
  for (const auto& seg : path.segments)
    for (const Point& p : seg.p) {
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
  return (maxx - minx + 1.0) * (maxy - miny + 1.0);
}

std::vector<SplinePath> prune_small(const std::vector<SplinePath>& paths, double min_bbox_area) {
  if (min_bbox_area < 0.0) throw InvalidArgument("min_bbox_area must be non-negative");
  std::vector<SplinePath> kept;
  for (const auto& p : paths)
    if (control_bbox_area(p) >= min_bbox_area) kept.push_back(p);
  return kept;
}

SplinePath smooth_controls(const SplinePath& path, int strength) {
  if (strength < 0) throw InvalidArgument("smoothing strength must be non-negative");
  const std::size_t m = path.segments.size();
  if (strength == 0 || m == 0) return path;

  // Flattened control polygon: c[3k] are joints, c[3k+1] and c[3k+2] the handles of segment k.
  const std::size_t n = 3 * m + 1;
  std::vector<Point> c(n);
  for (std::size_t k = 0; k < m; ++k)
    for (int i = 0; i < 3; ++i) c[3 * k + i] = path.segments[k].p[i];
  c[n - 1] = path.segments.back().p[3];
  const bool closed = path.closed && c.front() == c.back() && m >= 2;

  // Joints relax toward the mean of themselves and their two handles, which stay put. Repeated
  // passes converge on the handle midpoint instead of drifting.
  for (int it = 0; it < strength; ++it) {
    for (std::size_t i = 3; i + 1 < n; i += 3) c[i] = (1.0 / 3.0) * (c[i - 1] + c[i] + c[i + 1]);
    if (closed) c[0] = c[n - 1] = (1.0 / 3.0) * (c[n - 2] + c[0] + c[1]);
  }

  // Re-align the handles at each joint for C1 continuity.
  const auto align = [&](std::size_t in_idx, std::size_t joint, std::size_t out_idx) {
    Point in = c[in_idx] - c[joint], out = c[out_idx] - c[joint];
    Point d = normalized(out - in);
    if (norm(d) == 0.0) return;
    const double len = 0.5 * (norm(in) + norm(out));
    c[out_idx] = c[joint] + len * d;
    c[in_idx] = c[joint] - len * d;
  };
  for (std::size_t k = 1; k < m; ++k) align(3 * k - 1, 3 * k, 3 * k + 1);
  if (closed) {
    align(n - 2, 0, 1);
    c[n - 1] = c[0];
  }

  SplinePath result;
  result.closed = path.closed;
  for (std::size_t k = 0; k < m; ++k) result.segments.push_back({{c[3 * k], c[3 * k + 1], c[3 * k + 2], c[3 * k + 3]}});
  return result;
}

double total_turning(const SplinePath& path) {
  double total = 0.0;
  for (std::size_t k = 1; k < path.segments.size(); ++k) {
    const Point a = path.segments[k - 1].p[3] - path.segments[k - 1].p[0];
    const Point b = path.segments[k].p[3] - path.segments[k].p[0];
    if (norm(a) == 0.0 || norm(b) == 0.0) continue;
    total += std::abs(std::atan2(a.x * b.y - a.y * b.x, dot(a, b)));
  }
  return total;
}

// ---------------------------------------------------------------------------------------------
// Rasterization

namespace {

void stamp(SketchLayer& layer, Point c, double radius) {
  const int cx = static_cast<int>(std::floor(c.x + 0.5)), cy = static_cast<int>(std::floor(c.y + 0.5));
  if (layer.inside(cx, cy)) layer.set(cx, cy);
  if (radius <= 0.0) return;
  const int x0 = static_cast<int>(std::floor(c.x - radius)), x1 = static_cast<int>(std::ceil(c.x + radius));
  const int y0 = static_cast<int>(std::floor(c.y - radius)), y1 = static_cast<int>(std::ceil(c.y + radius));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (layer.inside(x, y) && (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= radius * radius) layer.set(x, y);
}

}  // namespace

SketchLayer rasterize(const std::vector<SplinePath>& paths, int width, int height, double stroke_width) {
  if (!(stroke_width >= 1.0)) throw InvalidArgument("stroke width must be at least 1");
  SketchLayer layer(width, height);
  const double r = 0.5 * stroke_width;
  for (const auto& path : paths)
    for (const auto& seg : path.segments) {
      const int n = std::max(1, static_cast<int>(std::ceil(seg.hull_length() / 0.25)));
      for (int i = 0; i <= n; ++i) stamp(layer, seg.eval(static_cast<double>(i) / n), r);
    }
  return layer;
}

double max_deviation(const SplinePath& path, const Polyline& polyline) {
  struct Sample {
    std::size_t seg;
    double t;
    Point q;
  };
  std::vector<Sample> samples;
  for (std::size_t s = 0; s < path.segments.size(); ++s) {
    const auto& seg = path.segments[s];
    const int n = std::max(1, static_cast<int>(std::ceil(seg.hull_length() / 0.05)));
    for (int i = 0; i <= n; ++i) samples.push_back({s, static_cast<double>(i) / n, seg.eval(static_cast<double>(i) / n)});
  }
  double worst = 0.0;
  for (const Point& p : polyline) {
    const Sample* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const Sample& s : samples) {
      const double d = distance(p, s.q);
      if (d < best_d) best_d = d, best = &s;
    }
    // Newton refinement of the closest parameter.
    const auto& seg = path.segments[best->seg];
    double t = best->t;
    for (int it = 0; it < 8; ++it) {
      const Point d = seg.eval(t) - p, q1 = seg.derivative(t), q2 = seg.second_derivative(t);
      const double den = dot(q1, q1) + dot(d, q2);
      if (!(den > 0.0)) break;
      t = std::clamp(t - dot(d, q1) / den, 0.0, 1.0);
    }
    worst = std::max(worst, std::min(best_d, distance(p, seg.eval(t))));
  }
  return worst;
}

// ---------------------------------------------------------------------------------------------
// Pipeline

SketchConfig SketchConfig::from_config(const Config& cfg) {
  SketchConfig s;
  s.edges.detector = parse_edge_detector(cfg.get_string("sketch.detector", to_string(s.edges.detector)));
  s.edges.sigma = cfg.get_double("sketch.sigma", s.edges.sigma);
  s.edges.gain = cfg.get_double("sketch.gain", s.edges.gain);
  s.edges.xdog_k = cfg.get_double("sketch.xdog_k", s.edges.xdog_k);
  s.edges.xdog_tau = cfg.get_double("sketch.xdog_tau", s.edges.xdog_tau);
  s.edges.xdog_phi = cfg.get_double("sketch.xdog_phi", s.edges.xdog_phi);
  s.edges.xdog_eps = cfg.get_double("sketch.xdog_eps", s.edges.xdog_eps);
  s.edges.canny_low = cfg.get_double("sketch.canny_low", s.edges.canny_low);
  s.edges.canny_high = cfg.get_double("sketch.canny_high", s.edges.canny_high);
  s.threshold = cfg.get_double("sketch.threshold", s.threshold);
  s.max_error = cfg.get_double("sketch.max_error", s.max_error);
  s.min_bbox_area_512 = cfg.get_double("sketch.min_bbox_area", s.min_bbox_area_512);
  s.smooth = cfg.get_int("sketch.smooth", s.smooth);
  s.stroke_width = cfg.get_double("sketch.stroke_width", s.stroke_width);
  s.raw_edges = cfg.get_bool("sketch.raw_edges", s.raw_edges);
  if (!(s.threshold > 0.0 && s.threshold < 1.0)) throw InvalidArgument("sketch.threshold must be in (0,1)");
  if (!(s.max_error > 0.0)) throw InvalidArgument("sketch.max_error must be positive");
  if (s.min_bbox_area_512 < 0.0) throw InvalidArgument("sketch.min_bbox_area must be non-negative");
  if (s.smooth < 0) throw InvalidArgument("sketch.smooth must be non-negative");
  if (!(s.stroke_width >= 1.0)) throw InvalidArgument("sketch.stroke_width must be at least 1");
  return s;
}

void SketchConfig::write_to(Config& cfg) const {
  cfg.set("sketch.detector", to_string(edges.detector));
  cfg.set("sketch.sigma", std::to_string(edges.sigma));
  cfg.set("sketch.gain", std::to_string(edges.gain));
  cfg.set("sketch.threshold", std::to_string(threshold));
  cfg.set("sketch.max_error", std::to_string(max_error));
  cfg.set("sketch.min_bbox_area", std::to_string(min_bbox_area_512));
  cfg.set("sketch.smooth", std::to_string(smooth));
  cfg.set("sketch.stroke_width", std::to_string(stroke_width));
  cfg.set("sketch.raw_edges", raw_edges ? "true" : "false");
}

double SketchConfig::min_bbox_area(int width, int height) const {
  return min_bbox_area_512 * (static_cast<double>(width) * height) / (512.0 * 512.0);
}

std::vector<Polyline> sketch_polylines(const RasterImage& img, const SketchConfig& cfg) {
  return trace(detect_edges(img, cfg.edges), cfg.threshold);
}

SketchLayer make_sketch(const RasterImage& img, const SketchConfig& cfg) {
  const auto polylines = sketch_polylines(img, cfg);
  if (cfg.raw_edges) {
    SketchLayer layer(img.width(), img.height());
    for (const auto& line : polylines)
      for (const Point& p : line) stamp(layer, p, 0.5 * cfg.stroke_width);
    return layer;
  }
  std::vector<SplinePath> paths;
  for (const auto& line : polylines) paths.push_back(fit_splines(line, cfg.max_error));
  paths = prune_small(paths, cfg.min_bbox_area(img.width(), img.height()));
  for (auto& p : paths) p = smooth_controls(p, cfg.smooth);
  return rasterize(paths, img.width(), img.height(), cfg.stroke_width);
}

}  // namespace sketchfill
