#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sketchfill/editor.hpp"

// JSON request and response bodies of the /v1 edit API. Images travel as base64 PNG.
// Coordinates are pixels (pixel centers at integers), colors are floats in [0, 1].
//
// edit / sketch-preview:
//   {"image": b64, "mask": b64, "noise_seed": 7,
//    "pen":   [{"points": [[x, y], ...], "erase": false, "width": 1}],
//    "color": [{"points": [[x, y], ...], "rgb": [r, g, b], "thickness": 3}],
//    "iris":  [{"center": [x, y], "radius": 5, "rgb": [r, g, b]}]}
// copy-paste:
//   {"source": b64, "source_mask": b64, "target": b64, "offset": [dx, dy],
//    "target_mask": b64 (optional), "noise_seed": 7}
//
// Parsers throw PayloadError with a field path such as `pen[0].points[2]`.

namespace sketchfill::api {

std::string base64_encode(std::span<const unsigned char> bytes);
/// Throws InvalidArgument on characters outside the standard alphabet or bad padding.
std::vector<unsigned char> base64_decode(std::string_view text);

EditRequest parse_edit(std::string_view body);
CopyPasteRequest parse_copy_paste(std::string_view body);

/// Adds the `pen`, `color` and `iris` lists of a JSON stroke document to `req`. Other keys
/// are rejected. An empty (or whitespace-only) document adds nothing.
void add_strokes(std::string_view text, EditRequest& req);

/// `{"image": b64png}`
std::string image_response(const RasterImage& rgb);
/// `{"sketch": b64png, "color": b64png, "color_valid": b64png, "mask": b64png}` from a
/// 9-channel input stack.
std::string preview_response(const RasterImage& stack);
std::string health_response(const std::string& model_id);
/// `{"error": message, "field": path}`
std::string error_response(const std::string& message, const std::string& field);

}  // namespace sketchfill::api
