#pragma once

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP version; the two must produce bitwise-identical output.

#include <cstddef>
#include <span>

#include "zebrod/image.hpp"

namespace zebrod::kernels {

// Inverse-mapped rotation about the image centre. `cos_t`/`sin_t` are those
// of the forward corner transform angle (theta = -a*pi/180). Pixels whose
// source lies outside the image blend toward `fill`. dst must be preallocated
// with the same size as src.
struct RotateArgs {
  double cos_t;
  double sin_t;
  Rgb fill;
};

// Bilinear resize of src[crop] into dst[dst_x, dst_y, dst_w, dst_h] with
// clamp-to-edge sampling inside the crop.
struct ResizeArgs {
  int crop_x, crop_y, crop_w, crop_h;
  int dst_x, dst_y, dst_w, dst_h;
};

namespace serial {
void rotate_image(const Image& src, Image& dst, const RotateArgs& args);
void resize_bilinear(const Image& src, Image& dst, const ResizeArgs& args);
// out[i] = sum_d query[d] * rows[i * dim + d], accumulated in double.
void dot_scores(std::span<const double> query, std::span<const float> rows,
                std::span<double> out);
}  // namespace serial

namespace omp {
void rotate_image(const Image& src, Image& dst, const RotateArgs& args);
void resize_bilinear(const Image& src, Image& dst, const ResizeArgs& args);
void dot_scores(std::span<const double> query, std::span<const float> rows,
                std::span<double> out);
}  // namespace omp

// One query/row dot product, double accumulation. Used for every score that
// leaves the index, so exact and approximate search agree bitwise.
double dot(const double* query, const float* row, std::size_t dim);

// Float accumulation; graph navigation only.
float dot_f32(const float* a, const float* b, std::size_t dim);

}  // namespace zebrod::kernels
