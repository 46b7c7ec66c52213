#include "faceattack/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include "faceattack/errors.hpp"

namespace faceattack {

GrayscaleImage::GrayscaleImage(std::size_t width, std::size_t height, std::uint8_t fill)
    : width_(width), height_(height), pixels_(width * height, fill) {}

GrayscaleImage::GrayscaleImage(std::size_t width, std::size_t height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != width_ * height_) {
    throw InvalidArgument("pixel buffer holds " + std::to_string(pixels_.size()) + " values, expected " +
                          std::to_string(width_ * height_));
  }
}

std::uint8_t GrayscaleImage::at(PixelCoordinate p) const {
  if (!contains(p)) {
    throw InvalidArgument("pixel (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") out of bounds");
  }
  return pixels_[index_of(p)];
}

void GrayscaleImage::set(PixelCoordinate p, std::uint8_t value) {
  if (!contains(p)) {
    throw InvalidArgument("pixel (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") out of bounds");
  }
  pixels_[index_of(p)] = value;
}

std::size_t count_differing_pixels(const GrayscaleImage& a, const GrayscaleImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionMismatch("cannot compare images of different dimensions");
  }
  std::size_t n = 0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    n += pa[i] != pb[i];
  }
  return n;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments running to end of line.
  void skip_separators() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
          ++pos_;
        }
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  bool read_unsigned(std::size_t& out) {
    skip_separators();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1u << 30)) {
        return false;
      }
      ++pos_;
    }
    out = value;
    return pos_ > start;
  }

  std::size_t pos() const { return pos_; }
  bool at_whitespace() const { return pos_ < bytes_.size() && std::isspace(bytes_[pos_]); }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayscaleImage load_pgm(std::span<const std::uint8_t> bytes) {
  using Kind = PgmError::Kind;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw PgmError(Kind::BadMagic, "not a binary PGM: magic must be 'P5'");
  }
  HeaderReader reader(bytes.subspan(2));
  std::size_t width = 0;
  std::size_t height = 0;
  if (!reader.read_unsigned(width) || !reader.read_unsigned(height) || width == 0 || height == 0) {
    throw PgmError(Kind::MissingDimensions, "PGM header lacks valid width and height");
  }
  std::size_t maxval = 0;
  if (!reader.read_unsigned(maxval) || maxval == 0) {
    throw PgmError(Kind::MissingDimensions, "PGM header lacks maxval");
  }
  if (maxval > 255) {
    throw PgmError(Kind::MaxvalTooLarge, "PGM maxval " + std::to_string(maxval) + " exceeds 255");
  }
  if (!reader.at_whitespace()) {
    throw PgmError(Kind::TruncatedPayload, "PGM header not terminated by whitespace");
  }
  reader.advance();
  const std::size_t offset = 2 + reader.pos();
  const std::size_t needed = width * height;
  if (bytes.size() - offset < needed) {
    throw PgmError(Kind::TruncatedPayload, "PGM payload has " + std::to_string(bytes.size() - offset) +
                                               " bytes, expected " + std::to_string(needed));
  }
  std::vector<std::uint8_t> pixels(bytes.begin() + offset, bytes.begin() + offset + needed);
  return GrayscaleImage(width, height, std::move(pixels));
}

std::vector<std::uint8_t> save_pgm(const GrayscaleImage& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels().begin(), image.pixels().end());
  return out;
}

GrayscaleImage read_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("failed reading " + path);
  }
  return load_pgm(bytes);
}

void write_pgm_file(const GrayscaleImage& image, const std::string& path) {
  const auto bytes = save_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot create " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("failed writing " + path);
  }
}

std::uint8_t inverted_value(std::uint8_t value) noexcept {
  return static_cast<std::uint8_t>((value + 128) % 256);
}

GrayscaleImage invert_pixel(const GrayscaleImage& image, PixelCoordinate at) {
  GrayscaleImage out = image;
  out.set(at, inverted_value(image.at(at)));
  return out;
}

std::vector<GridCell> partition_grid(const GrayscaleImage& image, std::size_t side) {
  if (side == 0 || image.width() % side != 0 || image.height() % side != 0) {
    throw InvalidArgument("cell side " + std::to_string(side) + " does not divide " +
                          std::to_string(image.width()) + "x" + std::to_string(image.height()));
  }
  std::vector<GridCell> cells;
  cells.reserve((image.width() / side) * (image.height() / side));
  for (std::size_t y = 0; y < image.height(); y += side) {
    for (std::size_t x = 0; x < image.width(); x += side) {
      cells.push_back(GridCell{PixelCoordinate{x, y}, side});
    }
  }
  return cells;
}

GrayscaleImage apply_checkerboard_noise(const GrayscaleImage& image, int lo, int hi, Rng& rng) {
  if (lo < 0 || hi > 255 || lo > hi) {
    throw InvalidArgument("checkerboard band [" + std::to_string(lo) + "," + std::to_string(hi) +
                          "] must satisfy 0 <= lo <= hi <= 255");
  }
  GrayscaleImage out = image;
  auto px = out.mutable_pixels();
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      const auto magnitude = static_cast<int>(rng.uniform_int(lo, hi));
      const std::size_t i = y * image.width() + x;
      const int shifted = px[i] + checkerboard_sign({x, y}) * magnitude;
      px[i] = static_cast<std::uint8_t>(std::clamp(shifted, 0, 255));
    }
  }
  return out;
}

}  // namespace faceattack
