#include "zebrod/image.hpp"

#include <algorithm>
#include <charconv>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "zebrod/error.hpp"

namespace zebrod {

namespace {

// OpenCV stores BGR; swap into our RGB layout.
Image from_bgr(const cv::Mat& mat) {
  cv::Mat bgr;
  if (mat.channels() == 1) {
    cv::Mat tmp;
    cv::merge(std::vector<cv::Mat>{mat, mat, mat}, tmp);
    bgr = tmp;
  } else if (mat.channels() == 4) {
    cv::Mat tmp;
    cv::Mat planes[4];
    cv::split(mat, planes);
    cv::merge(std::vector<cv::Mat>{planes[0], planes[1], planes[2]}, tmp);
    bgr = tmp;
  } else {
    bgr = mat;
  }
  if (bgr.depth() != CV_8U) {
    throw Error(ErrorCode::BadFormat, "only 8-bit images are supported");
  }
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* src = bgr.ptr<std::uint8_t>(y);
    std::uint8_t* dst = img.row(y);
    for (int x = 0; x < bgr.cols; ++x) {
      dst[3 * x + 0] = src[3 * x + 2];
      dst[3 * x + 1] = src[3 * x + 1];
      dst[3 * x + 2] = src[3 * x + 0];
    }
  }
  return img;
}

cv::Mat to_bgr(const Image& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    const std::uint8_t* src = image.row(y);
    auto* dst = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      dst[3 * x + 0] = src[3 * x + 2];
      dst[3 * x + 1] = src[3 * x + 1];
      dst[3 * x + 2] = src[3 * x + 0];
    }
  }
  return mat;
}

}  // namespace

Rgb parse_rgb_hex(std::string_view hex) {
  if (!hex.empty() && hex.front() == '#') hex.remove_prefix(1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
  if (hex.size() != 6 || ec != std::errc() || ptr != hex.data() + hex.size()) {
    throw Error(ErrorCode::InvalidConfig, "fill colour must be 6 hex digits");
  }
  return Rgb{static_cast<std::uint8_t>(value >> 16),
             static_cast<std::uint8_t>(value >> 8),
             static_cast<std::uint8_t>(value)};
}

Image::Image(int width, int height, Rgb fill)
    : width_(std::max(width, 0)), height_(std::max(height, 0)) {
  data_.resize(static_cast<std::size_t>(width_) * height_ * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  x0 = std::clamp(x0, 0, width_);
  x1 = std::clamp(x1, 0, width_);
  y0 = std::clamp(y0, 0, height_);
  y1 = std::clamp(y1, 0, height_);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

Image load_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) {
    throw Error(ErrorCode::IoFailure, "cannot read image " + path.string());
  }
  return from_bgr(mat);
}

void save_image(const std::filesystem::path& path, const Image& image) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), to_bgr(image));
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::IoFailure, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

Image decode_image(std::span<const std::uint8_t> encoded) {
  if (encoded.empty()) throw Error(ErrorCode::BadFormat, "empty image payload");
  cv::Mat buf(1, static_cast<int>(encoded.size()), CV_8UC1,
              const_cast<std::uint8_t*>(encoded.data()));
  cv::Mat mat;
  try {
    mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    mat.release();
  }
  if (mat.empty()) throw Error(ErrorCode::BadFormat, "undecodable image payload");
  return from_bgr(mat);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_bgr(image), out)) {
    throw Error(ErrorCode::IoFailure, "png encoding failed");
  }
  return out;
}

}  // namespace zebrod
