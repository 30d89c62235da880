#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sketchfill/error.hpp"
#include "sketchfill/raster.hpp"

namespace sketchfill {

namespace {

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

RasterImage decode_png(std::span<const unsigned char> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw FormatError(std::string("not a PNG image: ") + image.message, 0);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("PNG decode failed: " + msg, 0);
  }
  RasterImage out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  auto data = out.data();
  for (std::size_t i = 0; i < buf.size(); ++i) data[i] = buf[i] / 255.0f;
  return out;
}

std::vector<unsigned char> encode_png(const RasterImage& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw InvalidArgument("PNG output supports 1 or 3 channels, got " + std::to_string(img.channels()));
  std::vector<std::uint8_t> buf(img.size());
  auto data = img.data();
  std::transform(data.begin(), data.end(), buf.begin(), quantize);

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + image.message);
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, buf.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

RasterImage read_png(const std::string& path) {
  const auto bytes = read_file(path);
  return decode_png(bytes);
}

void write_png(const RasterImage& img, const std::string& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

BinaryMask decode_mask(std::span<const unsigned char> bytes) {
  const RasterImage img = to_grayscale(decode_png(bytes));
  BinaryMask mask(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) mask.set(x, y, quantize(img.at(x, y)) > 127);
  return mask;
}

BinaryMask read_mask(const std::string& path) {
  const auto bytes = read_file(path);
  return decode_mask(bytes);
}

void write_mask(const BinaryMask& mask, const std::string& path) { write_png(mask_to_image(mask), path); }

}  // namespace sketchfill
