#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zebrod {

// Box in normalized image coordinates: center and size as fractions of the
// image width/height. Valid boxes have 0 <= x_c, y_c <= 1 and 0 < w, h <= 1.
struct NormalizedBox {
  int class_id = 0;
  double x_c = 0.0;
  double y_c = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const NormalizedBox&) const = default;
};

struct PixelBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  bool operator==(const PixelBox&) const = default;
};

struct AnnotationSet {
  std::string image_id;
  std::vector<NormalizedBox> boxes;
};

bool is_valid(const NormalizedBox& box);
bool is_valid(const PixelBox& box);

// Parses "class x_c y_c w h" lines. Blank lines and '#' comments are skipped.
// Throws ParseError (MalformedLine / RangeViolation) naming the offending line.
std::vector<NormalizedBox> parse_annotation(std::string_view text);

// One "class x_c y_c w h" line per box, six decimals, each line
// newline-terminated. Throws Error(InvalidBox) on an invalid box.
std::string serialize_annotation(std::span<const NormalizedBox> boxes);

AnnotationSet read_annotation_file(const std::filesystem::path& path);
void write_annotation_file(const std::filesystem::path& path,
                           std::span<const NormalizedBox> boxes);

PixelBox to_pixels(const NormalizedBox& box, double img_w, double img_h);
NormalizedBox to_normalized(const PixelBox& box, int class_id, double img_w,
                            double img_h);

}  // namespace zebrod
