#include "sketchfill/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "sketchfill/error.hpp"

namespace sketchfill {

namespace {

void require_channels(int channels) {
  if (channels < 1) throw InvalidArgument("image must have at least one channel");
}

// exp(x) for x <= 0, accurate to ~1e-14 relative. Branch-free so the
// bilateral inner loop vectorizes.
inline double exp_nonpositive(double x) {
  x = x < -700.0 ? -700.0 : x;
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93145751953125e-1;
  constexpr double kLn2Lo = 1.42860682030941723212e-6;
  // Adding and subtracting 1.5 * 2^52 rounds to the nearest integer.
  constexpr double kRound = 6755399441055744.0;
  const double n = (x * kLog2e + kRound) - kRound;
  const double r = (x - n * kLn2Hi) - n * kLn2Lo;
  double p = 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // The low mantissa bits of (n + 1023 + 2^52) hold the biased exponent.
  const double biased = n + 1023.0 + 4503599627370496.0;
  std::uint64_t bits;
  std::memcpy(&bits, &biased, sizeof(bits));
  bits <<= 52;
  double scale;
  std::memcpy(&scale, &bits, sizeof(scale));
  return p * scale;
}

}  // namespace

RasterImage::RasterImage(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0) throw InvalidArgument("negative image dimension");
  require_channels(channels);
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  require_channels(channels);
  if (data_.size() != static_cast<std::size_t>(width) * height * channels)
    throw InvalidArgument("image data length does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + "x" + std::to_string(channels));
}

float RasterImage::clamped(int x, int y, int c) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y, c);
}

BinaryMask::BinaryMask(int width, int height, bool fill)
    : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
  if (width < 0 || height < 0) throw InvalidArgument("negative mask dimension");
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

RasterImage median_filter(const RasterImage& img, int kernel) {
  if (kernel < 1 || kernel % 2 == 0)
    throw InvalidArgument("median kernel must be odd and >= 1, got " + std::to_string(kernel));
  if (kernel == 1) return img;
  const int r = kernel / 2;
  RasterImage out(img.width(), img.height(), img.channels());
  std::vector<float> window(static_cast<std::size_t>(kernel) * kernel);
  const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        std::size_t k = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) window[k++] = img.clamped(x + dx, y + dy, c);
        std::nth_element(window.begin(), mid, window.end());
        out.at(x, y, c) = *mid;
      }
    }
  }
  return out;
}

RasterImage bilateral_filter(const RasterImage& img, double sigma_range, double sigma_domain, int iterations) {
  if (!(sigma_range > 0.0) || !(sigma_domain > 0.0))
    throw InvalidArgument("bilateral sigmas must be positive");
  if (iterations < 1) throw InvalidArgument("bilateral iterations must be >= 1");
  const int r = static_cast<int>(std::ceil(2.0 * sigma_domain));
  const int side = 2 * r + 1;
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();

  std::vector<double> spatial(static_cast<std::size_t>(side) * side);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      spatial[(dy + r) * side + (dx + r)] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_domain * sigma_domain));
  // Range kernel on the 0-255 scale: exp(-(255 d)^2 / 2 sr^2).
  const double range_k = -(255.0 * 255.0) / (2.0 * sigma_range * sigma_range);

  // Planar, padded copy of the current image. The loops run over offsets outermost and pixels
  // innermost so each pixel accumulates its window in the same order as a direct double loop
  // while the inner loop vectorizes across pixels.
  const int pw = w + 2 * r;
  const int ph = h + 2 * r;
  const std::size_t plane = static_cast<std::size_t>(pw) * ph;
  std::vector<double> padded(plane * ch);
  std::vector<double> acc(static_cast<std::size_t>(w) * ch), wsum(w);

  RasterImage cur = img;
  for (int it = 0; it < iterations; ++it) {
    for (int c = 0; c < ch; ++c)
      for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px) padded[c * plane + static_cast<std::size_t>(py) * pw + px] = cur.clamped(px - r, py - r, c);

    RasterImage next(w, h, ch);
    for (int y = 0; y < h; ++y) {
      std::fill(acc.begin(), acc.end(), 0.0);
      std::fill(wsum.begin(), wsum.end(), 0.0);
      for (int dy = 0; dy < side; ++dy)
        for (int dx = 0; dx < side; ++dx) {
          const double s = spatial[static_cast<std::size_t>(dy) * side + dx];
          const std::size_t nb = static_cast<std::size_t>(y + dy) * pw + dx;
          const std::size_t ce = static_cast<std::size_t>(y + r) * pw + r;
          if (ch == 3) {
            const double* n0 = &padded[nb];
            const double* n1 = &padded[plane + nb];
            const double* n2 = &padded[2 * plane + nb];
            const double* c0 = &padded[ce];
            const double* c1 = &padded[plane + ce];
            const double* c2 = &padded[2 * plane + ce];
            double* a0 = &acc[0];
            double* a1 = &acc[w];
            double* a2 = &acc[2 * static_cast<std::size_t>(w)];
            double* ws = wsum.data();
            for (int x = 0; x < w; ++x) {
              const double d0 = n0[x] - c0[x], d1 = n1[x] - c1[x], d2 = n2[x] - c2[x];
              const double wt = s * exp_nonpositive(range_k * (d0 * d0 + d1 * d1 + d2 * d2));
              ws[x] += wt;
              a0[x] += wt * n0[x];
              a1[x] += wt * n1[x];
              a2[x] += wt * n2[x];
            }
          } else {
            for (int x = 0; x < w; ++x) {
              double d2 = 0.0;
              for (int c = 0; c < ch; ++c) {
                const double d = padded[c * plane + nb + x] - padded[c * plane + ce + x];
                d2 += d * d;
              }
              const double wt = s * exp_nonpositive(range_k * d2);
              wsum[x] += wt;
              for (int c = 0; c < ch; ++c) acc[static_cast<std::size_t>(c) * w + x] += wt * padded[c * plane + nb + x];
            }
          }
        }
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c)
          next.at(x, y, c) = static_cast<float>(std::clamp(acc[static_cast<std::size_t>(c) * w + x] / wsum[x], 0.0, 1.0));
    }
    cur = std::move(next);
  }
  return cur;
}

RasterImage resize(const RasterImage& img, int width, int height) {
  if (width < 1 || height < 1) throw InvalidArgument("resize target must be at least 1x1");
  if (img.empty()) throw InvalidArgument("cannot resize an empty image");
  RasterImage out(width, height, img.channels());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - tx) + img.at(x1, y0, c) * tx;
        const double bot = img.at(x0, y1, c) * (1.0 - tx) + img.at(x1, y1, c) * tx;
        out.at(x, y, c) = static_cast<float>(std::clamp(top * (1.0 - ty) + bot * ty, 0.0, 1.0));
      }
    }
  }
  return out;
}

RasterImage composite(const RasterImage& original, const RasterImage& generated, const BinaryMask& mask) {
  if (!original.same_shape(generated) || mask.width() != original.width() || mask.height() != original.height())
    throw InvalidArgument("composite: image and mask dimensions differ");
  RasterImage out = original;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      if (mask.get(x, y))
        for (int c = 0; c < out.channels(); ++c) out.at(x, y, c) = generated.at(x, y, c);
  return out;
}

RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels() == 1) return img;
  RasterImage out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.at(x, y) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2);
  return out;
}

RasterImage mask_to_image(const BinaryMask& mask) {
  RasterImage out(mask.width(), mask.height(), 1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) out.at(x, y) = mask.get(x, y) ? 1.0f : 0.0f;
  return out;
}

BinaryMask image_to_mask(const RasterImage& img, float threshold) {
  BinaryMask out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.set(x, y, img.at(x, y, 0) > threshold);
  return out;
}

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double ksum = 0.0;
  for (int i = -r; i <= r; ++i) ksum += k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& v : k) v /= ksum;

  RasterImage tmp(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * img.clamped(x + i, y, c);
        tmp.at(x, y, c) = static_cast<float>(s);
      }
  RasterImage out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.clamped(x, y + i, c);
        out.at(x, y, c) = static_cast<float>(s);
      }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      bool hit = false;
      for (int dy = -radius; dy <= radius && !hit; ++dy)
        for (int dx = -radius; dx <= radius && !hit; ++dx) hit = mask.inside(x + dx, y + dy) && mask.get(x + dx, y + dy);
      out.set(x, y, hit);
    }
  return out;
}

BinaryMask erode(const BinaryMask& mask, int radius, bool outside_set) {
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      bool keep = true;
      for (int dy = -radius; dy <= radius && keep; ++dy)
        for (int dx = -radius; dx <= radius && keep; ++dx)
          keep = mask.inside(x + dx, y + dy) ? mask.get(x + dx, y + dy) : outside_set;
      out.set(x, y, keep);
    }
  return out;
}

BinaryMask dilate_disk(const BinaryMask& mask, double radius) {
  const int r = static_cast<int>(std::floor(radius));
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (dx * dx + dy * dy <= radius * radius && out.inside(x + dx, y + dy)) out.set(x + dx, y + dy);
    }
  return out;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw InvalidArgument("iou: mask dimensions differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits().size(); ++i) {
    inter += a.bits()[i] && b.bits()[i];
    uni += a.bits()[i] || b.bits()[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace sketchfill
