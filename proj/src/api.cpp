#include "sketchfill/api.hpp"

#include <array>
#include <cmath>
#include <initializer_list>
#include <limits>

#include "json.hpp"
#include "sketchfill/error.hpp"

namespace sketchfill::api {

using json = nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::string at_index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }
std::string at_key(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw PayloadError("", std::string("body is not valid JSON: ") + e.what());
  }
}

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw PayloadError(path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw PayloadError(at_key(path, k), "unknown key");
  }
}

const json& require(const json& obj, const std::string& path, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw PayloadError(at_key(path, key), "missing key");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw PayloadError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw PayloadError(path, "expected a finite number");
  return d;
}

int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw PayloadError(path, "expected an integer");
  const auto i = v.get<std::int64_t>();
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
    throw PayloadError(path, "integer out of range");
  return static_cast<int>(i);
}

std::uint64_t seed_value(const json& v, const std::string& path) {
  if (!v.is_number_unsigned()) throw PayloadError(path, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw PayloadError(path, "expected true or false");
  return v.get<bool>();
}

const json& array(const json& v, const std::string& path) {
  if (!v.is_array()) throw PayloadError(path, "expected an array");
  return v;
}

Point point(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw PayloadError(path, "expected [x, y]");
  return {number(v[0], at_index(path, 0)), number(v[1], at_index(path, 1))};
}

Polyline points(const json& v, const std::string& path) {
  Polyline out;
  for (std::size_t i = 0; i < array(v, path).size(); ++i) out.push_back(point(v[i], at_index(path, i)));
  return out;
}

Rgb rgb(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw PayloadError(path, "expected [r, g, b]");
  Rgb out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = static_cast<float>(number(v[i], at_index(path, i)));
  return out;
}

std::vector<unsigned char> b64_field(const json& v, const std::string& path) {
  if (!v.is_string()) throw PayloadError(path, "expected a base64 string");
  try {
    return base64_decode(v.get_ref<const std::string&>());
  } catch (const InvalidArgument& e) {
    throw PayloadError(path, e.what());
  }
}

RasterImage image_field(const json& v, const std::string& path) {
  const auto bytes = b64_field(v, path);
  try {
    RasterImage img = decode_png(bytes);
    if (img.channels() == 1) {
      RasterImage rgb3(img.width(), img.height(), 3);
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          for (int c = 0; c < 3; ++c) rgb3.at(x, y, c) = img.at(x, y);
      return rgb3;
    }
    return img;
  } catch (const FormatError& e) {
    throw PayloadError(path, e.what());
  }
}

BinaryMask mask_field(const json& v, const std::string& path) {
  const auto bytes = b64_field(v, path);
  try {
    return decode_mask(bytes);
  } catch (const FormatError& e) {
    throw PayloadError(path, e.what());
  }
}

void add_stroke_lists(const json& doc, const std::string& path, EditRequest& req) {
  if (const auto it = doc.find("pen"); it != doc.end()) {
    const std::string p = at_key(path, "pen");
    for (std::size_t i = 0; i < array(*it, p).size(); ++i) {
      const json& s = (*it)[i];
      const std::string sp = at_index(p, i);
      only_keys(s, sp, {"points", "erase", "width"});
      PenStroke stroke;
      stroke.points = points(require(s, sp, "points"), at_key(sp, "points"));
      if (s.contains("erase")) stroke.erase = boolean(s["erase"], at_key(sp, "erase"));
      if (s.contains("width")) stroke.width = number(s["width"], at_key(sp, "width"));
      req.pen.push_back(std::move(stroke));
    }
  }
  if (const auto it = doc.find("color"); it != doc.end()) {
    const std::string p = at_key(path, "color");
    for (std::size_t i = 0; i < array(*it, p).size(); ++i) {
      const json& s = (*it)[i];
      const std::string sp = at_index(p, i);
      only_keys(s, sp, {"points", "rgb", "thickness"});
      ColorStroke stroke;
      stroke.points = points(require(s, sp, "points"), at_key(sp, "points"));
      stroke.rgb = rgb(require(s, sp, "rgb"), at_key(sp, "rgb"));
      if (s.contains("thickness")) stroke.thickness = number(s["thickness"], at_key(sp, "thickness"));
      req.color.push_back(std::move(stroke));
    }
  }
  if (const auto it = doc.find("iris"); it != doc.end()) {
    const std::string p = at_key(path, "iris");
    for (std::size_t i = 0; i < array(*it, p).size(); ++i) {
      const json& s = (*it)[i];
      const std::string sp = at_index(p, i);
      only_keys(s, sp, {"center", "radius", "rgb"});
      IrisCircle c;
      c.center = point(require(s, sp, "center"), at_key(sp, "center"));
      c.radius = number(require(s, sp, "radius"), at_key(sp, "radius"));
      c.rgb = rgb(require(s, sp, "rgb"), at_key(sp, "rgb"));
      req.iris.push_back(c);
    }
  }
}

std::string png_b64(const RasterImage& img) { return base64_encode(encode_png(img)); }

}  // namespace

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
    std::uint32_t v = std::uint32_t(bytes[i]) << 16;
    if (n > 1) v |= std::uint32_t(bytes[i + 1]) << 8;
    if (n > 2) v |= bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += n > 1 ? kAlphabet[(v >> 6) & 63] : '=';
    out += n > 2 ? kAlphabet[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw InvalidArgument("base64 length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int d;
      if (c == '=' && last && k >= 2) {
        ++pad;
        d = 0;
      } else {
        d = b64_value(c);
        if (d < 0 || pad > 0) throw InvalidArgument("invalid base64 at offset " + std::to_string(i + k));
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<unsigned char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(v >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v));
  }
  return out;
}

EditRequest parse_edit(std::string_view body) {
  const json doc = parse_body(body);
  only_keys(doc, "", {"image", "mask", "pen", "color", "iris", "noise_seed"});
  EditRequest req;
  req.image = image_field(require(doc, "", "image"), "image");
  req.mask = mask_field(require(doc, "", "mask"), "mask");
  if (doc.contains("noise_seed")) req.noise_seed = seed_value(doc["noise_seed"], "noise_seed");
  add_stroke_lists(doc, "", req);
  return req;
}

CopyPasteRequest parse_copy_paste(std::string_view body) {
  const json doc = parse_body(body);
  only_keys(doc, "", {"source", "source_mask", "target", "offset", "target_mask", "noise_seed"});
  CopyPasteRequest req;
  req.source = image_field(require(doc, "", "source"), "source");
  req.source_mask = mask_field(require(doc, "", "source_mask"), "source_mask");
  req.target = image_field(require(doc, "", "target"), "target");
  if (doc.contains("offset")) {
    const json& o = doc["offset"];
    if (!o.is_array() || o.size() != 2) throw PayloadError("offset", "expected [dx, dy]");
    req.offset_x = integer(o[0], "offset[0]");
    req.offset_y = integer(o[1], "offset[1]");
  }
  if (doc.contains("target_mask")) req.target_mask = mask_field(doc["target_mask"], "target_mask");
  if (doc.contains("noise_seed")) req.noise_seed = seed_value(doc["noise_seed"], "noise_seed");
  return req;
}

void add_strokes(std::string_view text, EditRequest& req) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return;
  const json doc = parse_body(text);
  only_keys(doc, "", {"pen", "color", "iris"});
  add_stroke_lists(doc, "", req);
}

std::string image_response(const RasterImage& rgb) { return json{{"image", png_b64(rgb)}}.dump(); }

std::string preview_response(const RasterImage& stack) {
  if (stack.channels() != channel::kCount) throw InvalidArgument("preview needs a 9-channel input stack");
  const int w = stack.width(), h = stack.height();
  RasterImage sketch(w, h, 1), color(w, h, 3), valid(w, h, 1), mask(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      sketch.at(x, y) = stack.at(x, y, channel::kSketch);
      mask.at(x, y) = stack.at(x, y, channel::kMask);
      bool any = false;
      for (int c = 0; c < 3; ++c) {
        color.at(x, y, c) = stack.at(x, y, channel::kColor + c);
        any = any || color.at(x, y, c) != 0.0f;
      }
      valid.at(x, y) = any ? 1.0f : 0.0f;
    }
  return json{{"sketch", png_b64(sketch)}, {"color", png_b64(color)}, {"color_valid", png_b64(valid)},
              {"mask", png_b64(mask)}}
      .dump();
}

std::string health_response(const std::string& model_id) {
  return json{{"status", "ok"}, {"model", model_id}}.dump();
}

std::string error_response(const std::string& message, const std::string& field) {
  return json{{"error", message}, {"field", field}}.dump();
}

}  // namespace sketchfill::api
