#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sketchfill {

/// Row-major interleaved float image with samples in [0,1].
/// Pixel (x, y) has its center at integer coordinates (x, y).
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, float fill = 0.0f);
  RasterImage(int width, int height, int channels, std::vector<float> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  /// Clamp-to-edge read.
  float clamped(int x, int y, int c = 0) const;

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  bool same_shape(const RasterImage& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  bool operator==(const RasterImage& other) const = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// One bit per pixel; true marks the editable region.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v = true) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool inside(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::size_t count() const noexcept;
  bool any() const noexcept { return count() > 0; }

  std::span<const unsigned char> bits() const noexcept { return bits_; }

  bool operator==(const BinaryMask& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<unsigned char> bits_;
};

struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  // exclusive
  int y1 = 0;  // exclusive

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  bool operator==(const Rect&) const = default;
};

RasterImage median_filter(const RasterImage& img, int kernel);

/// Iterated bilateral filter. `sigma_range` is in 0-255 intensity units; the range term
/// uses the Euclidean distance between pixel colors. Window radius is ceil(2 * sigma_domain).
RasterImage bilateral_filter(const RasterImage& img, double sigma_range, double sigma_domain, int iterations);

/// Bilinear resampling with half-pixel-center alignment.
RasterImage resize(const RasterImage& img, int width, int height);

/// `generated` inside `mask`, `original` elsewhere.
RasterImage composite(const RasterImage& original, const RasterImage& generated, const BinaryMask& mask);

RasterImage to_grayscale(const RasterImage& img);

/// Single-channel 0/1 image from a mask, and back (threshold 0.5).
RasterImage mask_to_image(const BinaryMask& mask);
BinaryMask image_to_mask(const RasterImage& img, float threshold = 0.5f);

/// Morphology with a (2r+1)x(2r+1) square structuring element. Erosion treats pixels outside the
/// image as set when `outside_set` is true.
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius, bool outside_set = false);

/// Morphology with a Euclidean disk of the given radius.
BinaryMask dilate_disk(const BinaryMask& mask, double radius);

/// |a & b| / |a | b|; 1 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

/// Separable Gaussian blur with clamp-to-edge borders (radius ceil(3 sigma)).
RasterImage gaussian_blur(const RasterImage& img, double sigma);

/// Lossless PNG I/O. Samples are quantized with round(v * 255).
RasterImage read_png(const std::string& path);
void write_png(const RasterImage& img, const std::string& path);
RasterImage decode_png(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_png(const RasterImage& img);

/// Mask files: single-channel image, value > 127 is set.
BinaryMask read_mask(const std::string& path);
void write_mask(const BinaryMask& mask, const std::string& path);
BinaryMask decode_mask(std::span<const unsigned char> bytes);

}  // namespace sketchfill
