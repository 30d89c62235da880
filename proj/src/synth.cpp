#include "sketchfill/synth.hpp"

#include <algorithm>
#include <cmath>

#include "sketchfill/error.hpp"
#include "sketchfill/rng.hpp"

namespace sketchfill {

namespace {

double luminance(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

Rgb random_color(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return {static_cast<float>(uniform(rng, lo, hi)), static_cast<float>(uniform(rng, lo, hi)),
          static_cast<float>(uniform(rng, lo, hi))};
}

Rgb contrasting_color(Rng& rng, const Rgb& against, double min_gap) {
  for (;;) {
    const Rgb c = random_color(rng);
    if (std::abs(luminance(c) - luminance(against)) >= min_gap) return c;
  }
}

struct Shape {
  bool disk = true;
  Point center;
  double a = 0, b = 0;  // radius, or rectangle half extents
  double angle = 0;
  Rgb color{};

  double bound() const { return disk ? a : std::hypot(a, b); }

  double sdf(Point p) const {
    const Point d = p - center;
    if (disk) return norm(d) - a;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = std::abs(c * d.x + s * d.y) - a, v = std::abs(-s * d.x + c * d.y) - b;
    return std::hypot(std::max(u, 0.0), std::max(v, 0.0)) + std::min(std::max(u, v), 0.0);
  }
};

}  // namespace

ShapeScene synth_shapes(int side, std::uint64_t seed) {
  if (side < 16) throw InvalidArgument("synth_shapes needs side >= 16");
  Rng rng(derive_seed(seed, {0x53484150}));
  const Rgb bg = random_color(rng);
  std::vector<Shape> shapes;
  const int want = uniform_int(rng, 1, 3);
  for (int attempt = 0; attempt < 200 && static_cast<int>(shapes.size()) < want; ++attempt) {
    Shape s;
    s.disk = uniform(rng, 0, 1) < 0.5;
    if (s.disk) {
      s.a = uniform(rng, 0.1, 0.25) * side;
    } else {
      s.a = uniform(rng, 0.08, 0.22) * side;
      s.b = uniform(rng, 0.08, 0.22) * side;
      s.angle = uniform(rng, 0, M_PI);
    }
    const double margin = s.bound() + 3.0;
    if (2 * margin >= side) continue;
    s.center = {uniform(rng, margin, side - 1 - margin), uniform(rng, margin, side - 1 - margin)};
    bool clear = true;
    for (const Shape& o : shapes) clear = clear && distance(o.center, s.center) > o.bound() + s.bound() + 4.0;
    if (!clear) continue;
    s.color = contrasting_color(rng, bg, 0.35);
    shapes.push_back(s);
  }
  ShapeScene scene{RasterImage(side, side, 3), BinaryMask(side, side)};
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      Rgb c = bg;
      for (const Shape& s : shapes) {
        const double d = s.sdf({double(x), double(y)});
        if (d <= 0.0) c = s.color;
        if (std::abs(d) <= 0.5) scene.boundary.set(x, y);
      }
      for (int k = 0; k < 3; ++k) scene.image.at(x, y, k) = c[k];
    }
  return scene;
}

namespace {

struct FaceStyle {
  Rgb background, background2, hair, skin, sclera, iris, pupil, lips, teeth, brows;
  double face_w, face_h, mouth_w, mouth_open;
};

bool in_ellipse(Point p, Point c, double rx, double ry) {
  const double dx = (p.x - c.x) / rx, dy = (p.y - c.y) / ry;
  return dx * dx + dy * dy <= 1.0;
}

// Color and label of the canonical face at point p (side S, eyes at (c -+ S/8, c)).
std::pair<Rgb, std::uint8_t> face_at(Point p, double S, const FaceStyle& st) {
  const double c = 0.5 * (S - 1);
  const double t = std::clamp(p.y / S, 0.0, 1.0);
  Rgb col;
  for (int k = 0; k < 3; ++k) col[k] = static_cast<float>((1 - t) * st.background[k] + t * st.background2[k]);
  std::uint8_t label = 0;
  if (in_ellipse(p, {c, c - 0.1 * S}, st.face_w * S + 0.08 * S, st.face_h * S + 0.02 * S) && p.y < c + 0.12 * S) {
    col = st.hair;
    label = 1;
  }
  const Point face_c{c, c + 0.06 * S};
  if (in_ellipse(p, face_c, st.face_w * S, st.face_h * S)) {
    col = st.skin;
    label = 0;
    // Subtle shading so the skin is not perfectly flat.
    const double shade = 1.0 - 0.08 * ((p.x - c) / (st.face_w * S)) * ((p.x - c) / (st.face_w * S));
    for (int k = 0; k < 3; ++k) col[k] = static_cast<float>(col[k] * shade);
    for (double side_sign : {-1.0, 1.0}) {
      const Point eye{c + side_sign * 0.125 * S, c};
      const Point brow{eye.x, c - 0.075 * S};
      if (std::abs(p.x - brow.x) <= 0.06 * S && std::abs(p.y - brow.y) <= 0.012 * S) {
        col = st.brows;
        label = 4;
      }
      if (in_ellipse(p, eye, 0.065 * S, 0.035 * S)) {
        col = st.sclera;
        label = 0;
        const double d = distance(p, eye);
        if (d <= 0.03 * S) col = st.iris;
        if (d <= 0.013 * S) col = st.pupil;
      }
    }
    const Point mouth{c, c + 0.2 * S};
    if (in_ellipse(p, mouth, st.mouth_w * S, 0.03 * S)) {
      col = st.lips;
      label = 2;
      if (st.mouth_open > 0 && in_ellipse(p, mouth, 0.7 * st.mouth_w * S, st.mouth_open * S)) {
        col = st.teeth;
        label = 3;
      }
    }
    if (std::abs(p.x - c) <= 0.012 * S && p.y > c + 0.03 * S && p.y < c + 0.11 * S) {
      for (int k = 0; k < 3; ++k) col[k] = static_cast<float>(col[k] * 0.8);
    }
  }
  for (auto& v : col) v = std::clamp(v, 0.0f, 1.0f);
  return {col, label};
}

}  // namespace

SynthFace synth_face(int side, std::uint64_t seed, bool pose_jitter) {
  if (side < 32) throw InvalidArgument("synth_face needs side >= 32");
  Rng rng(derive_seed(seed, {0x46414345}));
  FaceStyle st;
  st.background = random_color(rng, 0.2, 0.9);
  st.background2 = random_color(rng, 0.2, 0.9);
  st.hair = random_color(rng, 0.02, 0.45);
  const double tone = uniform(rng, 0.35, 0.95);
  st.skin = {static_cast<float>(tone), static_cast<float>(tone * uniform(rng, 0.7, 0.85)),
             static_cast<float>(tone * uniform(rng, 0.55, 0.75))};
  st.sclera = {0.95f, 0.95f, 0.92f};
  const int iris_kind = uniform_int(rng, 0, 2);
  st.iris = iris_kind == 0   ? Rgb{0.25f, 0.45f, 0.8f}
            : iris_kind == 1 ? Rgb{0.3f, 0.6f, 0.35f}
                             : Rgb{0.45f, 0.28f, 0.12f};
  for (auto& v : st.iris) v = std::clamp(v + static_cast<float>(uniform(rng, -0.08, 0.08)), 0.0f, 1.0f);
  st.pupil = {0.03f, 0.03f, 0.03f};
  st.lips = {static_cast<float>(uniform(rng, 0.55, 0.85)), static_cast<float>(uniform(rng, 0.15, 0.35)),
             static_cast<float>(uniform(rng, 0.2, 0.4))};
  st.teeth = {0.92f, 0.9f, 0.85f};
  st.brows = st.hair;
  st.face_w = uniform(rng, 0.24, 0.3);
  st.face_h = uniform(rng, 0.32, 0.38);
  st.mouth_w = uniform(rng, 0.07, 0.11);
  st.mouth_open = uniform(rng, 0, 1) < 0.4 ? uniform(rng, 0.008, 0.018) : 0.0;

  const double S = side, c = 0.5 * (S - 1);
  double angle = 0, scale = 1, tx = 0, ty = 0;
  if (pose_jitter) {
    angle = uniform(rng, -12.0, 12.0) * M_PI / 180.0;
    scale = uniform(rng, 0.85, 1.1);
    tx = uniform(rng, -0.05, 0.05) * S;
    ty = uniform(rng, -0.05, 0.05) * S;
  }
  const double ca = std::cos(angle), sa = std::sin(angle);
  // Forward: image = R * scale * (canonical - c) + c + t.
  const auto forward = [&](Point q) {
    const Point d = q - Point{c, c};
    return Point{c + tx + scale * (ca * d.x - sa * d.y), c + ty + scale * (sa * d.x + ca * d.y)};
  };
  const auto inverse = [&](Point p) {
    const Point d{(p.x - c - tx) / scale, (p.y - c - ty) / scale};
    return Point{c + ca * d.x + sa * d.y, c - sa * d.x + ca * d.y};
  };

  SynthFace face;
  face.image = RasterImage(side, side, 3);
  face.labels = LabelMap(side, side);
  constexpr int kSub = 3;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double acc[3] = {0, 0, 0};
      int votes[kMaxLabel + 1] = {};
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const Point p{x + (sx + 0.5) / kSub - 0.5, y + (sy + 0.5) / kSub - 0.5};
          const auto [col, label] = face_at(inverse(p), S, st);
          for (int k = 0; k < 3; ++k) acc[k] += col[k];
          ++votes[label];
        }
      for (int k = 0; k < 3; ++k) face.image.at(x, y, k) = static_cast<float>(acc[k] / (kSub * kSub));
      face.labels.set(x, y, static_cast<std::uint8_t>(std::max_element(votes, votes + kMaxLabel + 1) - votes));
    }
  face.left_eye = forward({c - 0.125 * S, c});
  face.right_eye = forward({c + 0.125 * S, c});
  face.iris_color = st.iris;
  return face;
}

}  // namespace sketchfill
