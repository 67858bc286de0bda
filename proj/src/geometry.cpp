#include "zebrod/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "zebrod/error.hpp"
#include "zebrod/kernels.hpp"

namespace zebrod {

double canonical_angle(double angle_deg) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0.0) a += 360.0;
  if (a >= 360.0) a -= 360.0;
  return a;
}

RotationSpec::RotationSpec(double angle_deg, double tightness) {
  if (!std::isfinite(angle_deg)) {
    throw Error(ErrorCode::InvalidSpec, "rotation angle must be finite");
  }
  if (!(tightness > 0.0 && tightness <= 1.0)) {
    throw Error(ErrorCode::InvalidSpec, "tightness must lie in (0, 1]");
  }
  angle_deg_ = canonical_angle(angle_deg);
  tightness_ = tightness;
}

SinCos rotation_sincos(double angle_deg) {
  const double a = canonical_angle(angle_deg);
  if (a == 0.0) return {1.0, 0.0};
  if (a == 90.0) return {0.0, -1.0};
  if (a == 180.0) return {-1.0, 0.0};
  if (a == 270.0) return {0.0, 1.0};
  const double theta = -a * std::numbers::pi / 180.0;
  return {std::cos(theta), std::sin(theta)};
}

Point2 rotate_point(Point2 p, Point2 center, double angle_deg) {
  const auto [c, s] = rotation_sincos(angle_deg);
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  return {dx * c - dy * s + center.x, dx * s + dy * c + center.y};
}

std::optional<NormalizedBox> rotate_tight_box(const NormalizedBox& box,
                                              double img_w, double img_h,
                                              const RotationSpec& spec) {
  if (!is_valid(box)) throw Error(ErrorCode::InvalidBox, "invalid input box");
  const PixelBox px = to_pixels(box, img_w, img_h);

  const Point2 center{img_w / 2.0, img_h / 2.0};
  const Point2 corners[4] = {{px.x_min, px.y_min},
                             {px.x_max, px.y_min},
                             {px.x_max, px.y_max},
                             {px.x_min, px.y_max}};
  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const auto& corner : corners) {
    const Point2 r = rotate_point(corner, center, spec.angle_deg());
    x_min = std::min(x_min, r.x);
    x_max = std::max(x_max, r.x);
    y_min = std::min(y_min, r.y);
    y_max = std::max(y_max, r.y);
  }

  const double t = spec.tightness();
  const double xr = (x_min + x_max) / 2.0;
  const double yr = (y_min + y_max) / 2.0;
  const double wt = t * (x_max - x_min);
  const double ht = t * (y_max - y_min);

  const double cx_min = std::max(0.0, xr - wt / 2.0);
  const double cy_min = std::max(0.0, yr - ht / 2.0);
  const double cx_max = std::min(img_w, xr + wt / 2.0);
  const double cy_max = std::min(img_h, yr + ht / 2.0);
  if (!(cx_max - cx_min > 0.0) || !(cy_max - cy_min > 0.0)) return std::nullopt;

  NormalizedBox out{box.class_id, (cx_min + cx_max) / (2.0 * img_w),
                    (cy_min + cy_max) / (2.0 * img_h),
                    (cx_max - cx_min) / img_w, (cy_max - cy_min) / img_h};
  // Rounding can push c +- size/2 one ulp past the border; trim the size.
  const auto fit = [](double c, double& size) {
    while (size > 0.0 && (c - size / 2.0 < 0.0 || c + size / 2.0 > 1.0)) {
      size = std::nextafter(size, 0.0);
    }
  };
  fit(out.x_c, out.w);
  fit(out.y_c, out.h);
  if (!(out.w > 0.0) || !(out.h > 0.0)) return std::nullopt;
  return out;
}

double iou(const PixelBox& a, const PixelBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Patch crop_and_pad(const Image& image, const PixelBox& box, int target, Rgb pad,
                   std::string source_image_id) {
  if (target < 1) throw Error(ErrorCode::InvalidSpec, "patch size must be >= 1");
  const auto clip = [](double v, int hi) {
    return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(hi)));
  };
  const int x0 = clip(std::floor(box.x_min), image.width());
  const int y0 = clip(std::floor(box.y_min), image.height());
  const int x1 = clip(std::ceil(box.x_max), image.width());
  const int y1 = clip(std::ceil(box.y_max), image.height());
  const int cw = x1 - x0;
  const int ch = y1 - y0;
  if (cw <= 0 || ch <= 0) {
    throw Error(ErrorCode::EmptyCrop, "box does not intersect the image");
  }

  // Longer side is exactly target; the shorter rounds half up.
  int nw = target;
  int nh = target;
  if (cw > ch) {
    nh = static_cast<int>(std::floor(static_cast<double>(ch) * target / cw + 0.5));
  } else if (ch > cw) {
    nw = static_cast<int>(std::floor(static_cast<double>(cw) * target / ch + 0.5));
  }
  nw = std::clamp(nw, 1, target);
  nh = std::clamp(nh, 1, target);

  Patch patch{Image(target, target, pad), std::move(source_image_id), box};
  const kernels::ResizeArgs args{x0, y0, cw, ch, (target - nw) / 2, (target - nh) / 2, nw, nh};
  kernels::omp::resize_bilinear(image, patch.pixels, args);
  return patch;
}

Image rotate_image(const Image& image, double angle_deg, Rgb fill) {
  if (!std::isfinite(angle_deg)) {
    throw Error(ErrorCode::InvalidSpec, "rotation angle must be finite");
  }
  Image out(image.width(), image.height(), fill);
  const auto [c, s] = rotation_sincos(angle_deg);
  kernels::omp::rotate_image(image, out, kernels::RotateArgs{c, s, fill});
  return out;
}

}  // namespace zebrod
