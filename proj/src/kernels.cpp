#include "zebrod/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace zebrod::kernels {

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline void rotate_row(const Image& src, Image& dst, const RotateArgs& a, int y) {
  const int w = src.width();
  const int h = src.height();
  const double cx = w / 2.0;
  const double cy = h / 2.0;
  const double fill[3] = {double(a.fill.r), double(a.fill.g), double(a.fill.b)};
  std::uint8_t* out = dst.row(y);
  const double py = y + 0.5 - cy;
  for (int x = 0; x < w; ++x) {
    const double px = x + 0.5 - cx;
    // Inverse of rotate_point: rotate the destination centre by +a.
    const double sx = px * a.cos_t + py * a.sin_t + cx - 0.5;
    const double sy = -px * a.sin_t + py * a.cos_t + cy - 0.5;
    const double fx = std::floor(sx);
    const double fy = std::floor(sy);
    const double ax = sx - fx;
    const double ay = sy - fy;
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const std::uint8_t* taps[4] = {nullptr, nullptr, nullptr, nullptr};
    const int xs[2] = {x0, x0 + 1};
    const int ys[2] = {y0, y0 + 1};
    for (int j = 0; j < 2; ++j) {
      for (int i = 0; i < 2; ++i) {
        if (xs[i] >= 0 && xs[i] < w && ys[j] >= 0 && ys[j] < h) {
          taps[j * 2 + i] = src.row(ys[j]) + 3 * static_cast<std::size_t>(xs[i]);
        }
      }
    }
    for (int c = 0; c < 3; ++c) {
      const double p00 = taps[0] ? taps[0][c] : fill[c];
      const double p10 = taps[1] ? taps[1][c] : fill[c];
      const double p01 = taps[2] ? taps[2][c] : fill[c];
      const double p11 = taps[3] ? taps[3][c] : fill[c];
      const double top = (1.0 - ax) * p00 + ax * p10;
      const double bottom = (1.0 - ax) * p01 + ax * p11;
      out[3 * x + c] = to_u8((1.0 - ay) * top + ay * bottom);
    }
  }
}

inline void resize_row(const Image& src, Image& dst, const ResizeArgs& a, int dy) {
  const double scale_x = static_cast<double>(a.crop_w) / a.dst_w;
  const double scale_y = static_cast<double>(a.crop_h) / a.dst_h;
  const double sy = std::clamp((dy + 0.5) * scale_y - 0.5, 0.0, a.crop_h - 1.0);
  const int y0 = static_cast<int>(sy);
  const int y1 = std::min(y0 + 1, a.crop_h - 1);
  const double ay = sy - y0;
  const std::uint8_t* r0 = src.row(a.crop_y + y0);
  const std::uint8_t* r1 = src.row(a.crop_y + y1);
  std::uint8_t* out = dst.row(a.dst_y + dy);
  for (int dx = 0; dx < a.dst_w; ++dx) {
    const double sx = std::clamp((dx + 0.5) * scale_x - 0.5, 0.0, a.crop_w - 1.0);
    const int x0 = static_cast<int>(sx);
    const int x1 = std::min(x0 + 1, a.crop_w - 1);
    const double ax = sx - x0;
    const std::size_t o0 = 3 * static_cast<std::size_t>(a.crop_x + x0);
    const std::size_t o1 = 3 * static_cast<std::size_t>(a.crop_x + x1);
    for (int c = 0; c < 3; ++c) {
      const double top = (1.0 - ax) * r0[o0 + c] + ax * r0[o1 + c];
      const double bottom = (1.0 - ax) * r1[o0 + c] + ax * r1[o1 + c];
      out[3 * static_cast<std::size_t>(a.dst_x + dx) + c] =
          to_u8((1.0 - ay) * top + ay * bottom);
    }
  }
}

}  // namespace

double dot(const double* query, const float* row, std::size_t dim) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t d = 0;
  for (; d + 4 <= dim; d += 4) {
    acc[0] += query[d + 0] * static_cast<double>(row[d + 0]);
    acc[1] += query[d + 1] * static_cast<double>(row[d + 1]);
    acc[2] += query[d + 2] * static_cast<double>(row[d + 2]);
    acc[3] += query[d + 3] * static_cast<double>(row[d + 3]);
  }
  for (; d < dim; ++d) acc[d % 4] += query[d] * static_cast<double>(row[d]);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

float dot_f32(const float* a, const float* b, std::size_t dim) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t d = 0;
  for (; d + 8 <= dim; d += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[d + j] * b[d + j];
  }
  for (; d < dim; ++d) acc[d % 8] += a[d] * b[d];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

namespace serial {

void rotate_image(const Image& src, Image& dst, const RotateArgs& args) {
  for (int y = 0; y < src.height(); ++y) rotate_row(src, dst, args, y);
}

void resize_bilinear(const Image& src, Image& dst, const ResizeArgs& args) {
  for (int y = 0; y < args.dst_h; ++y) resize_row(src, dst, args, y);
}

void dot_scores(std::span<const double> query, std::span<const float> rows,
                std::span<double> out) {
  const std::size_t dim = query.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = dot(query.data(), rows.data() + i * dim, dim);
  }
}

}  // namespace serial

namespace omp {

void rotate_image(const Image& src, Image& dst, const RotateArgs& args) {
  const int h = src.height();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) rotate_row(src, dst, args, y);
}

void resize_bilinear(const Image& src, Image& dst, const ResizeArgs& args) {
  const int h = args.dst_h;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) resize_row(src, dst, args, y);
}

void dot_scores(std::span<const double> query, std::span<const float> rows,
                std::span<double> out) {
  const std::size_t dim = query.size();
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static) if (n > 2048)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = dot(query.data(), rows.data() + static_cast<std::size_t>(i) * dim, dim);
  }
}

}  // namespace omp

}  // namespace zebrod::kernels
