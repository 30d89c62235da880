#include "sketchfill/editor.hpp"

#include <algorithm>
#include <cmath>

#include "sketchfill/autodiff.hpp"
#include "sketchfill/error.hpp"
#include "sketchfill/rng.hpp"
#include "sketchfill/training.hpp"

namespace sketchfill {

namespace {

bool in_frame(Point p, int w, int h) {
  return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0 && p.y >= 0 && p.x <= w - 1 && p.y <= h - 1;
}

void check_points(const Polyline& pts, const std::string& field, int w, int h) {
  if (pts.empty()) throw RequestError(field + ".points", "stroke has no points");
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (!in_frame(pts[i], w, h))
      throw RequestError(field + ".points[" + std::to_string(i) + "]", "stroke point lies outside the image");
}

void check_rgb(const Rgb& rgb, const std::string& field) {
  for (float v : rgb)
    if (!(v >= 0.0f && v <= 1.0f)) throw RequestError(field + ".rgb", "color components must be in [0, 1]");
}

std::string indexed(const char* name, std::size_t i) { return std::string(name) + "[" + std::to_string(i) + "]"; }

}  // namespace

void EditRequest::validate() const {
  if (image.empty() || image.channels() != 3) throw RequestError("image", "image must be RGB");
  const int w = image.width(), h = image.height();
  if (mask.width() != w || mask.height() != h) throw RequestError("mask", "mask size differs from the image");
  if (!mask.any()) throw RequestError("mask", "mask is empty");
  for (std::size_t i = 0; i < pen.size(); ++i) {
    check_points(pen[i].points, indexed("pen", i), w, h);
    if (!(pen[i].width >= 1.0 && pen[i].width <= w))
      throw RequestError(indexed("pen", i) + ".width", "pen width must be in [1, image width]");
  }
  for (std::size_t i = 0; i < color.size(); ++i) {
    check_points(color[i].points, indexed("color", i), w, h);
    check_rgb(color[i].rgb, indexed("color", i));
    if (!(color[i].thickness > 0.0 && color[i].thickness <= w))
      throw RequestError(indexed("color", i) + ".thickness", "thickness must be in (0, image width]");
  }
  for (std::size_t i = 0; i < iris.size(); ++i) {
    if (!in_frame(iris[i].center, w, h))
      throw RequestError(indexed("iris", i) + ".center", "iris center lies outside the image");
    if (!(iris[i].radius > 0.0 && iris[i].radius <= w))
      throw RequestError(indexed("iris", i) + ".radius", "iris radius must be in (0, image width]");
    check_rgb(iris[i].rgb, indexed("iris", i));
  }
  if (sketch_layer && (sketch_layer->width() != w || sketch_layer->height() != h))
    throw RequestError("sketch", "sketch layer size differs from the image");
  if (color_layer && (color_layer->width() != w || color_layer->height() != h || color_layer->rgb.channels() != 3))
    throw RequestError("color", "color layer size differs from the image");
}

RasterImage rasterize_user_input(const EditRequest& req, NoiseDist noise) {
  req.validate();
  const int w = req.image.width(), h = req.image.height();

  SketchLayer sketch = req.sketch_layer ? *req.sketch_layer : SketchLayer(w, h);
  for (const PenStroke& s : req.pen) {
    const SketchLayer bits = rasterize({polyline_path(s.points)}, w, h, s.width);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (bits.get(x, y)) sketch.set(x, y, !s.erase);
  }

  ColorLayer color = req.color_layer ? *req.color_layer : ColorLayer::empty(w, h);
  for (const ColorStroke& s : req.color) paint_stroke(color, s.points, s.rgb, s.thickness);
  for (const IrisCircle& c : req.iris) color = draw_iris(color, {c.center, c.rgb, c.radius});

  RasterImage input(w, h, channel::kCount);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool m = req.mask.get(x, y);
      for (int c = 0; c < 3; ++c) input.at(x, y, channel::kRgb + c) = m ? 0.0f : req.image.at(x, y, c);
      input.at(x, y, channel::kSketch) = m && sketch.get(x, y) ? 1.0f : 0.0f;
      const bool painted = m && color.valid.get(x, y);
      for (int c = 0; c < 3; ++c) input.at(x, y, channel::kColor + c) = painted ? color.rgb.at(x, y, c) : 0.0f;
      input.at(x, y, channel::kMask) = m ? 1.0f : 0.0f;
    }
  fill_noise(input, derive_seed(req.noise_seed, {4}), noise);
  return input;
}

BinaryMask translate(const BinaryMask& mask, int dx, int dy) {
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.get(x, y) && out.inside(x + dx, y + dy)) out.set(x + dx, y + dy);
  return out;
}

ColorLayer translate(const ColorLayer& layer, int dx, int dy) {
  ColorLayer out = ColorLayer::empty(layer.width(), layer.height());
  for (int y = 0; y < layer.height(); ++y)
    for (int x = 0; x < layer.width(); ++x) {
      if (!layer.valid.get(x, y) || !out.valid.inside(x + dx, y + dy)) continue;
      out.valid.set(x + dx, y + dy);
      for (int c = 0; c < 3; ++c) out.rgb.at(x + dx, y + dy, c) = layer.rgb.at(x, y, c);
    }
  return out;
}

EditRequest copy_paste_request(const CopyPasteRequest& req, const DatasetConfig& cfg) {
  const int S = cfg.size;
  if (req.source.channels() != 3 || req.source.width() != S || req.source.height() != S)
    throw RequestError("source", "source must be an RGB " + std::to_string(S) + "x" + std::to_string(S) + " image");
  if (req.target.channels() != 3 || req.target.width() != S || req.target.height() != S)
    throw RequestError("target", "target must be an RGB " + std::to_string(S) + "x" + std::to_string(S) + " image");
  if (req.source_mask.width() != S || req.source_mask.height() != S)
    throw RequestError("source_mask", "source mask size differs from the source");
  if (req.target_mask && (req.target_mask->width() != S || req.target_mask->height() != S))
    throw RequestError("target_mask", "target mask size differs from the target");
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      if (req.source_mask.get(x, y) && !req.source_mask.inside(x + req.offset_x, y + req.offset_y))
        throw RequestError("offset", "translated source region does not fit in the target");

  EditRequest out;
  out.image = req.target;
  out.noise_seed = req.noise_seed;
  out.mask = translate(req.source_mask, req.offset_x, req.offset_y);
  if (req.target_mask)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        if (req.target_mask->get(x, y)) out.mask.set(x, y);

  if (!req.source_mask.any()) {
    out.sketch_layer = SketchLayer(S, S);
    out.color_layer = ColorLayer::empty(S, S);
    return out;
  }
  const SampleSource src = prepare_source(req.source, cfg);
  SketchLayer sketch(S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      if (req.source_mask.get(x, y) && src.sketch.get(x, y)) sketch.set(x, y);
  // Same stroke stream as forging with this seed, so a self-paste reproduces a forged sample.
  ColorLayer color = synth_strokes(src.color_map, derive_seed(req.noise_seed, {2}), cfg.strokes, S, S);
  for (const IrisEstimate& iris : src.irises) color = draw_iris(color, iris);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      if (!req.source_mask.get(x, y)) {
        color.valid.set(x, y, false);
        for (int c = 0; c < 3; ++c) color.rgb.at(x, y, c) = 0.0f;
      }
  out.sketch_layer = translate(sketch, req.offset_x, req.offset_y);
  out.color_layer = translate(color, req.offset_x, req.offset_y);
  return out;
}

Editor::Editor(Generator<float> gen, const Config& config, std::string model_id)
    : gen_(std::move(gen)), model_id_(std::move(model_id)) {
  Config c = config;
  c.set("size", std::to_string(gen_.config().side));
  data_cfg_ = DatasetConfig::from_config(c);
}

Editor::Editor(Editor&& other)
    : gen_(std::move(other.gen_)),
      data_cfg_(std::move(other.data_cfg_)),
      model_id_(std::move(other.model_id_)),
      forwards_(other.forwards_.load()) {}

Editor Editor::from_checkpoint(const std::string& path) {
  LoadedGenerator loaded = load_generator(path);
  return Editor(std::move(loaded.gen), loaded.config, loaded.hash);
}

void Editor::check(const EditRequest& req) const {
  req.validate();
  if (req.image.width() != side() || req.image.height() != side())
    throw RequestError("image", "model expects a " + std::to_string(side()) + "x" + std::to_string(side()) +
                                    " image, got " + std::to_string(req.image.width()) + "x" +
                                    std::to_string(req.image.height()));
}

RasterImage Editor::preview(const EditRequest& req) const {
  check(req);
  return rasterize_user_input(req, data_cfg_.noise);
}

RasterImage Editor::edit(const EditRequest& req) const {
  const RasterImage input = preview(req);
  const int S = side();
  const std::int64_t plane = std::int64_t(S) * S;
  std::vector<float> planar(channel::kCount * plane);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int c = 0; c < channel::kCount; ++c) planar[c * plane + std::int64_t(y) * S + x] = input.at(x, y, c);

  ad::NoGradGuard guard;
  const auto out = gen_.forward(ad::Tensor<float>::from({1, channel::kCount, S, S}, std::move(planar)));
  forwards_.fetch_add(1);
  RasterImage generated(S, S, 3);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = out.data()[c * plane + std::int64_t(y) * S + x];
        if (!std::isfinite(v)) throw NumericError("generator produced a non-finite value");
        generated.at(x, y, c) = std::clamp(v, 0.0f, 1.0f);
      }
  return composite(req.image, generated, req.mask);
}

RasterImage Editor::copy_paste(const CopyPasteRequest& req) const {
  return edit(copy_paste_request(req, data_cfg_));
}

}  // namespace sketchfill
