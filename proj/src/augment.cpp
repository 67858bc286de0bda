#include "zebrod/augment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <set>

#include "zebrod/error.hpp"
#include "zebrod/geometry.hpp"
#include "zebrod/labelio.hpp"

namespace zebrod {

namespace fs = std::filesystem;

std::vector<double> default_angles(double step) {
  if (!(step > 0.0 && step < 360.0)) {
    throw Error(ErrorCode::InvalidConfig, "angle step must lie in (0, 360)");
  }
  std::vector<double> out;
  for (int i = 1; i * step < 360.0 - 1e-9; ++i) out.push_back(i * step);
  return out;
}

void AugmentConfig::validate() const {
  if (angles.empty()) throw Error(ErrorCode::InvalidConfig, "angle list is empty");
  std::set<std::string> names;
  for (double a : angles) {
    if (!(a > 0.0 && a < 360.0)) {
      throw Error(ErrorCode::InvalidConfig, "angle " + std::to_string(a) + " outside (0, 360)");
    }
    if (!names.insert(rotated_stem("", a)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate angle " + std::to_string(a));
    }
  }
  if (!(tightness > 0.0 && tightness <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "tightness must lie in (0, 1]");
  }
  if (input_dir.empty() || output_dir.empty()) {
    throw Error(ErrorCode::InvalidConfig, "input and output directories are required");
  }
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

std::string rotated_stem(const std::string& stem, double angle) {
  char buf[32];
  if (angle == std::floor(angle)) {
    std::snprintf(buf, sizeof(buf), "_rot%03d", static_cast<int>(angle));
  } else {
    std::snprintf(buf, sizeof(buf), "_rot%05.1f", angle);
  }
  return stem + buf;
}

nlohmann::json AugmentReport::to_json() const {
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& d : dropped_by_file) dropped.push_back({{"file", d.file}, {"count", d.count}});
  return {{"images_in", images_in},
          {"images_out", images_out},
          {"boxes_in", boxes_in},
          {"boxes_out", boxes_out},
          {"boxes_dropped", boxes_dropped},
          {"missing_annotations", missing_annotations},
          {"dropped_by_file", std::move(dropped)},
          {"elapsed_s", elapsed_s}};
}

namespace {

struct ItemResult {
  std::size_t images_out = 0;
  std::size_t boxes_in = 0;
  std::size_t boxes_out = 0;
  std::vector<DroppedBoxes> dropped;
};

// Below this the serialized field would print as 0.000000 and fail to parse back.
constexpr double kMinSerializableSide = 5e-7;

ItemResult augment_one(const AugmentConfig& cfg, const fs::path& image_path,
                       const fs::path& label_path) {
  ItemResult r;
  const auto boxes = read_annotation_file(label_path).boxes;
  const Image image = load_image(image_path);
  const std::string stem = image_path.stem().string();
  const std::string ext = image_path.extension().string();
  r.boxes_in = boxes.size();

  if (cfg.keep_originals) {
    std::error_code ec;
    fs::copy_file(image_path, cfg.output_dir / image_path.filename(),
                  fs::copy_options::overwrite_existing, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot copy " + image_path.string() + ": " + ec.message());
    write_annotation_file(cfg.output_dir / (stem + ".txt"), boxes);
    ++r.images_out;
    r.boxes_out += boxes.size();
  }

  for (double angle : cfg.angles) {
    const RotationSpec spec(angle, cfg.tightness);
    std::vector<NormalizedBox> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
      auto rb = rotate_tight_box(b, image.width(), image.height(), spec);
      if (rb && rb->w >= kMinSerializableSide && rb->h >= kMinSerializableSide) {
        out.push_back(*rb);
      }
    }
    const std::string name = rotated_stem(stem, angle);
    save_image(cfg.output_dir / (name + ext), rotate_image(image, angle, cfg.fill));
    write_annotation_file(cfg.output_dir / (name + ".txt"), out);
    ++r.images_out;
    r.boxes_out += out.size();
    if (out.size() < boxes.size()) r.dropped.push_back({name + ".txt", boxes.size() - out.size()});
  }
  return r;
}

}  // namespace

AugmentReport generate_rotated_dataset(const AugmentConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (!fs::is_directory(config.input_dir)) {
    throw Error(ErrorCode::IoFailure, config.input_dir.string() + " is not a directory");
  }
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + config.output_dir.string());
  if (fs::equivalent(config.input_dir, config.output_dir, ec)) {
    throw Error(ErrorCode::InvalidConfig, "output directory must differ from input");
  }

  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(config.input_dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());

  AugmentReport report;
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& img : images) {
    auto label = img;
    label.replace_extension(".txt");
    if (fs::is_regular_file(label)) {
      pairs.emplace_back(img, label);
    } else {
      report.missing_annotations.push_back(img.filename().string());
    }
  }

  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
  std::vector<ItemResult> results(pairs.size());
  std::vector<std::exception_ptr> failures(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      results[i] = augment_one(config, pairs[i].first, pairs[i].second);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  report.images_in = pairs.size();
  for (auto& r : results) {
    report.images_out += r.images_out;
    report.boxes_in += r.boxes_in;
    report.boxes_out += r.boxes_out;
    for (auto& d : r.dropped) {
      report.boxes_dropped += d.count;
      report.dropped_by_file.push_back(std::move(d));
    }
  }
  report.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string_view to_string(DefectKind k) {
  switch (k) {
    case DefectKind::UnpairedImage: return "unpaired_image";
    case DefectKind::UnpairedLabel: return "unpaired_label";
    case DefectKind::MalformedLine: return "malformed_line";
    case DefectKind::OutOfRange: return "out_of_range";
    case DefectKind::IoFailure: return "io_failure";
  }
  return "unknown";
}

nlohmann::json VerifyReport::to_json() const {
  nlohmann::json d = nlohmann::json::array();
  for (const auto& x : defects) {
    d.push_back({{"kind", to_string(x.kind)}, {"file", x.file}, {"line", x.line}, {"message", x.message}});
  }
  return {{"images", images},
          {"labels", labels},
          {"pairs_verified", pairs_verified},
          {"boxes", boxes},
          {"ok", ok()},
          {"defects", std::move(d)}};
}

VerifyReport verify_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, dir.string() + " is not a directory");
  std::map<std::string, fs::path> images;
  std::map<std::string, fs::path> labels;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto& p = e.path();
    if (is_image_file(p)) {
      images.emplace(p.stem().string(), p);
    } else if (p.extension() == ".txt" && p.filename() != "classes.txt") {
      labels.emplace(p.stem().string(), p);
    }
  }

  VerifyReport report;
  report.images = images.size();
  report.labels = labels.size();
  for (const auto& [stem, p] : images) {
    if (!labels.count(stem)) {
      report.defects.push_back({DefectKind::UnpairedImage, p.filename().string(), 0, "no label file"});
    }
  }

  std::vector<std::pair<std::string, fs::path>> label_list(labels.begin(), labels.end());
  const auto n = static_cast<std::ptrdiff_t>(label_list.size());
  std::vector<std::size_t> box_counts(label_list.size(), 0);
  std::vector<std::optional<Defect>> parse_defects(label_list.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& p = label_list[i].second;
    try {
      box_counts[i] = read_annotation_file(p).boxes.size();
    } catch (const ParseError& e) {
      parse_defects[i] = Defect{e.code() == ErrorCode::RangeViolation ? DefectKind::OutOfRange
                                                                      : DefectKind::MalformedLine,
                                p.filename().string(), e.line(), e.what()};
    } catch (const std::exception& e) {
      parse_defects[i] = Defect{DefectKind::IoFailure, p.filename().string(), 0, e.what()};
    }
  }
  for (std::size_t i = 0; i < label_list.size(); ++i) {
    const auto& [stem, p] = label_list[i];
    const bool paired = images.count(stem) > 0;
    if (!paired) {
      report.defects.push_back({DefectKind::UnpairedLabel, p.filename().string(), 0, "no image file"});
    }
    if (parse_defects[i]) {
      report.defects.push_back(*parse_defects[i]);
    } else {
      report.boxes += box_counts[i];
      if (paired) ++report.pairs_verified;
    }
  }
  return report;
}

}  // namespace zebrod
