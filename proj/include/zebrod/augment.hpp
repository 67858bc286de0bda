#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "zebrod/image.hpp"

namespace zebrod {

std::vector<double> default_angles(double step = 10.0);

struct AugmentConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  std::vector<double> angles = default_angles();
  double tightness = 0.9;
  Rgb fill = kWhite;
  bool keep_originals = true;

  // Throws Error(InvalidConfig).
  void validate() const;
};

struct DroppedBoxes {
  std::string file;
  std::size_t count = 0;
};

struct AugmentReport {
  std::size_t images_in = 0;  // image/label pairs processed
  std::size_t images_out = 0;
  std::size_t boxes_in = 0;
  std::size_t boxes_out = 0;
  std::size_t boxes_dropped = 0;
  std::vector<std::string> missing_annotations;  // image files skipped
  std::vector<DroppedBoxes> dropped_by_file;
  double elapsed_s = 0.0;

  nlohmann::json to_json() const;
};

bool is_image_file(const std::filesystem::path& p);

// "{stem}_rot{angle:03}"; fractional angles keep one decimal.
std::string rotated_stem(const std::string& stem, double angle);

AugmentReport generate_rotated_dataset(const AugmentConfig& config);

enum class DefectKind { UnpairedImage, UnpairedLabel, MalformedLine, OutOfRange, IoFailure };
std::string_view to_string(DefectKind k);

struct Defect {
  DefectKind kind;
  std::string file;
  std::size_t line = 0;  // 0 when not line-specific
  std::string message;
};

struct VerifyReport {
  std::size_t images = 0;
  std::size_t labels = 0;
  std::size_t pairs_verified = 0;
  std::size_t boxes = 0;
  std::vector<Defect> defects;

  bool ok() const { return defects.empty(); }
  nlohmann::json to_json() const;
};

// Labels are parsed, images only checked for presence (decoding 36k files is
// not what this is for). "classes.txt" is treated as metadata.
VerifyReport verify_dataset(const std::filesystem::path& dir);

}  // namespace zebrod
