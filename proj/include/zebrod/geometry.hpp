#pragma once

#include <optional>
#include <string>

#include "zebrod/image.hpp"
#include "zebrod/labelio.hpp"

namespace zebrod {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Rotation angle (canonicalized to [0, 360)) plus the tightness factor applied
// to the enclosing AABB of the rotated box. t = 1 disables tightening.
class RotationSpec {
 public:
  static constexpr double kDefaultTightness = 0.9;

  // Throws Error(InvalidSpec) for non-finite angles or t outside (0, 1].
  RotationSpec(double angle_deg, double tightness = kDefaultTightness);

  double angle_deg() const { return angle_deg_; }
  double tightness() const { return tightness_; }

 private:
  double angle_deg_;
  double tightness_;
};

double canonical_angle(double angle_deg);

// cos/sin of theta = -a*pi/180, exact for multiples of 90 degrees.
struct SinCos {
  double cos_t;
  double sin_t;
};
SinCos rotation_sincos(double angle_deg);

// Rotates p about center using theta = -a*pi/180:
//   x' = (x-Cx)cos(theta) - (y-Cy)sin(theta) + Cx
//   y' = (x-Cx)sin(theta) + (y-Cy)cos(theta) + Cy
Point2 rotate_point(Point2 p, Point2 center, double angle_deg);

// Relabels one box for an image rotated by spec.angle_deg() about its centre:
// pixels -> corners -> rotate -> AABB -> scale by t about the AABB centre ->
// clip to the image -> renormalize. nullopt when nothing survives clipping.
std::optional<NormalizedBox> rotate_tight_box(const NormalizedBox& box,
                                              double img_w, double img_h,
                                              const RotationSpec& spec);

double iou(const PixelBox& a, const PixelBox& b);

struct Patch {
  Image pixels;  // target x target
  std::string source_image_id;
  PixelBox source_box;

  int width() const { return pixels.width(); }
  int height() const { return pixels.height(); }
};

inline constexpr int kDefaultPatchSize = 224;

// Aspect-preserving letterbox: crop (clipped to the image), scale the longer
// side to `target` with bilinear sampling, centre on a pad-coloured canvas
// (odd padding puts the extra pixel bottom/right).
Patch crop_and_pad(const Image& image, const PixelBox& box,
                   int target = kDefaultPatchSize, Rgb pad = kWhite,
                   std::string source_image_id = {});

// Same-size rotation about the image centre, consistent with rotate_point.
Image rotate_image(const Image& image, double angle_deg, Rgb fill = kWhite);

}  // namespace zebrod
