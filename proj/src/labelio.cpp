#include "zebrod/labelio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "zebrod/error.hpp"

namespace zebrod {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }
bool in_open_unit(double v) { return v > 0.0 && v <= 1.0; }

}  // namespace

bool is_valid(const NormalizedBox& box) {
  return box.class_id >= 0 && in_unit(box.x_c) && in_unit(box.y_c) &&
         in_open_unit(box.w) && in_open_unit(box.h);
}

bool is_valid(const PixelBox& box) {
  return std::isfinite(box.x_min) && std::isfinite(box.y_min) &&
         std::isfinite(box.x_max) && std::isfinite(box.y_max) &&
         box.x_min <= box.x_max && box.y_min <= box.y_max;
}

std::vector<NormalizedBox> parse_annotation(std::string_view text) {
  std::vector<NormalizedBox> boxes;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    if (tokens.size() != 5) {
      throw ParseError(ErrorCode::MalformedLine, line_no,
                       "expected 5 fields, got " + std::to_string(tokens.size()));
    }

    NormalizedBox box;
    if (!parse_number(tokens[0], box.class_id)) {
      throw ParseError(ErrorCode::MalformedLine, line_no,
                       "class id is not an integer: '" + std::string(tokens[0]) + "'");
    }
    double* fields[] = {&box.x_c, &box.y_c, &box.w, &box.h};
    for (std::size_t i = 0; i < 4; ++i) {
      if (!parse_number(tokens[i + 1], *fields[i])) {
        throw ParseError(ErrorCode::MalformedLine, line_no,
                         "non-numeric field: '" + std::string(tokens[i + 1]) + "'");
      }
    }
    if (!is_valid(box)) {
      throw ParseError(ErrorCode::RangeViolation, line_no,
                       "field outside valid range");
    }
    boxes.push_back(box);
  }
  return boxes;
}

std::string serialize_annotation(std::span<const NormalizedBox> boxes) {
  std::string out;
  out.reserve(boxes.size() * 40);
  char buf[128];
  for (const auto& b : boxes) {
    if (!is_valid(b)) {
      throw Error(ErrorCode::InvalidBox, "cannot serialize invalid box");
    }
    int n = std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f\n",
                          b.class_id, b.x_c, b.y_c, b.w, b.h);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

AnnotationSet read_annotation_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return AnnotationSet{path.stem().string(), parse_annotation(ss.str())};
}

void write_annotation_file(const std::filesystem::path& path,
                           std::span<const NormalizedBox> boxes) {
  std::string text = serialize_annotation(boxes);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  }
}

PixelBox to_pixels(const NormalizedBox& box, double img_w, double img_h) {
  if (!(img_w > 0.0) || !(img_h > 0.0)) {
    throw Error(ErrorCode::NonPositiveImageSize, "image size must be positive");
  }
  const double cx = box.x_c * img_w;
  const double cy = box.y_c * img_h;
  const double half_w = box.w * img_w / 2.0;
  const double half_h = box.h * img_h / 2.0;
  return PixelBox{cx - half_w, cy - half_h, cx + half_w, cy + half_h};
}

NormalizedBox to_normalized(const PixelBox& box, int class_id, double img_w,
                            double img_h) {
  if (!(img_w > 0.0) || !(img_h > 0.0)) {
    throw Error(ErrorCode::NonPositiveImageSize, "image size must be positive");
  }
  return NormalizedBox{class_id, (box.x_min + box.x_max) / (2.0 * img_w),
                       (box.y_min + box.y_max) / (2.0 * img_h),
                       (box.x_max - box.x_min) / img_w,
                       (box.y_max - box.y_min) / img_h};
}

}  // namespace zebrod
