#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faceattack/rng.hpp"

namespace faceattack {

struct PixelCoordinate {
  std::size_t x = 0;  // column
  std::size_t y = 0;  // row

  friend auto operator<=>(const PixelCoordinate&, const PixelCoordinate&) = default;
};

struct GridCell {
  PixelCoordinate origin;
  std::size_t side = 0;

  bool contains(PixelCoordinate p) const {
    return p.x >= origin.x && p.x < origin.x + side && p.y >= origin.y && p.y < origin.y + side;
  }
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Row-major 8-bit grayscale raster. Values are immutable through the
/// perturbation API: every operation returns a new image.
class GrayscaleImage {
 public:
  GrayscaleImage() = default;
  GrayscaleImage(std::size_t width, std::size_t height, std::uint8_t fill = 0);
  GrayscaleImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  bool contains(PixelCoordinate p) const noexcept { return p.x < width_ && p.y < height_; }
  std::size_t index_of(PixelCoordinate p) const noexcept { return p.y * width_ + p.x; }

  std::uint8_t at(PixelCoordinate p) const;
  std::uint8_t at(std::size_t x, std::size_t y) const { return at(PixelCoordinate{x, y}); }
  void set(PixelCoordinate p, std::uint8_t value);

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> mutable_pixels() noexcept { return pixels_; }

  friend bool operator==(const GrayscaleImage&, const GrayscaleImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Number of pixel positions at which two equally sized images differ.
std::size_t count_differing_pixels(const GrayscaleImage& a, const GrayscaleImage& b);

// Binary P5 with maxval <= 255. Header comments are skipped on read.
GrayscaleImage load_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> save_pgm(const GrayscaleImage& image);

GrayscaleImage read_pgm_file(const std::string& path);
void write_pgm_file(const GrayscaleImage& image, const std::string& path);

/// Shifts one pixel by half the intensity range, (v + 128) mod 256. Applying
/// it twice at the same coordinate restores the original value.
GrayscaleImage invert_pixel(const GrayscaleImage& image, PixelCoordinate at);
std::uint8_t inverted_value(std::uint8_t value) noexcept;

/// Square side x side cells in row-major order. side must divide both
/// dimensions.
std::vector<GridCell> partition_grid(const GrayscaleImage& image, std::size_t side);

/// Alternating-sign noise: each pixel gets a magnitude drawn uniformly from
/// [lo, hi], added where (x + y) is even and subtracted where it is odd, then
/// clamped to [0, 255]. Magnitudes are drawn in raster order, one per pixel.
GrayscaleImage apply_checkerboard_noise(const GrayscaleImage& image, int lo, int hi, Rng& rng);

/// +1 for the additive parity class, -1 for the subtractive one.
inline int checkerboard_sign(PixelCoordinate p) noexcept { return (p.x + p.y) % 2 == 0 ? 1 : -1; }

}  // namespace faceattack
