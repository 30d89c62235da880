#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sketchfill/color.hpp"
#include "sketchfill/raster.hpp"
#include "sketchfill/sketch.hpp"

namespace sketchfill {

/// Flat-colored disks and rotated rectangles on a flat background, plus the set of pixels whose
/// centers lie within half a pixel of a shape outline.
struct ShapeScene {
  RasterImage image;
  BinaryMask boundary;
};

ShapeScene synth_shapes(int side, std::uint64_t seed);

/// Cartoon face used as toy training data. Eyes are the pupil centers in image coordinates.
struct SynthFace {
  RasterImage image;
  LabelMap labels;
  Point left_eye;
  Point right_eye;
  std::array<float, 3> iris_color{};
};

/// `pose_jitter` enables a random rotation, scale and shift of the whole face.
SynthFace synth_face(int side, std::uint64_t seed, bool pose_jitter = false);

}  // namespace sketchfill
