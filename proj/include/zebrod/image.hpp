#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace zebrod {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

// Parses "ffffff" / "#ffffff". Throws Error(InvalidConfig) otherwise.
Rgb parse_rgb_hex(std::string_view hex);

// 8-bit interleaved RGB image, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = kWhite);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  std::uint8_t* row(int y) { return data_.data() + row_offset(y); }
  const std::uint8_t* row(int y) const { return data_.data() + row_offset(y); }

  Rgb at(int x, int y) const {
    const std::uint8_t* p = row(y) + 3 * static_cast<std::size_t>(x);
    return Rgb{p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    std::uint8_t* p = row(y) + 3 * static_cast<std::size_t>(x);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);

  std::span<const std::uint8_t> bytes() const { return data_; }
  std::span<std::uint8_t> bytes() { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t row_offset(int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Codec boundary. PNG/JPEG/BMP/PPM by file extension.
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);
Image decode_image(std::span<const std::uint8_t> encoded);
std::vector<std::uint8_t> encode_png(const Image& image);

}  // namespace zebrod
