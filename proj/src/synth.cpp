#include "zebrod/synth.hpp"

#include <cmath>
#include <random>

#include "zebrod/error.hpp"
#include "zebrod/hash.hpp"

namespace zebrod::synth {

namespace {

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int first_covered(double edge) { return static_cast<int>(std::ceil(edge - 0.5)); }

}  // namespace

std::vector<Embedding> random_unit_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<Embedding> out;
  out.reserve(n);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = dist(rng);
    out.push_back(normalize(Embedding(v)));
  }
  return out;
}

Image render(int width, int height, const std::vector<NormalizedBox>& boxes,
             const std::vector<Rgb>& colors) {
  if (boxes.size() != colors.size()) {
    throw Error(ErrorCode::InvalidConfig, "one colour per box required");
  }
  Image img(width, height, kWhite);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const PixelBox p = to_pixels(boxes[i], width, height);
    img.fill_rect(first_covered(p.x_min), first_covered(p.y_min), first_covered(p.x_max),
                  first_covered(p.y_max), colors[i]);
  }
  return img;
}

Scene checkout_scene(const std::string& image_id, const std::vector<std::uint32_t>& classes,
                     int width, int height, std::uint64_t seed) {
  Scene s;
  s.image.image_id = image_id;
  const std::size_t n = classes.size();
  std::vector<Rgb> colors;
  if (n > 0) {
    std::mt19937_64 rng(splitmix64(seed ^ fnv1a64(image_id)));
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    const std::size_t rows = (n + cols - 1) / cols;
    const double cw = 1.0 / static_cast<double>(cols);
    const double ch = 1.0 / static_cast<double>(rows);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = cw * (0.5 + 0.3 * u01(rng));
      const double h = ch * (0.5 + 0.3 * u01(rng));
      const double slack_x = (cw - w) / 2.0;
      const double slack_y = (ch - h) / 2.0;
      const double xc = (static_cast<double>(i % cols) + 0.5) * cw + slack_x * (2.0 * u01(rng) - 1.0) * 0.8;
      const double yc = (static_cast<double>(i / cols) + 0.5) * ch + slack_y * (2.0 * u01(rng) - 1.0) * 0.8;
      s.boxes.push_back({static_cast<int>(classes[i]), xc, yc, w, h});
      colors.push_back(LabelOracleEmbedder::class_color(classes[i]));
    }
  }
  s.image.pixels = render(width, height, s.boxes, colors);
  return s;
}

void write_fixture(const std::filesystem::path& dir, const Scene& scene) {
  std::filesystem::create_directories(dir);
  save_image(dir / (scene.image.image_id + ".png"), scene.image.pixels);
  write_annotation_file(dir / (scene.image.image_id + ".txt"), scene.boxes);
}

void write_product_dataset(const std::filesystem::path& dir, std::size_t n, int width, int height,
                           std::uint64_t seed, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(splitmix64(seed));
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.25 + 0.3 * u01(rng);
    const double h = 0.25 + 0.3 * u01(rng);
    const double xc = 0.5 + (1.0 - w) * 0.3 * (2.0 * u01(rng) - 1.0);
    const double yc = 0.5 + (1.0 - h) * 0.3 * (2.0 * u01(rng) - 1.0);
    const NormalizedBox box{static_cast<int>(i % 7), xc, yc, w, h};
    char name[64];
    std::snprintf(name, sizeof(name), "%s%05zu", prefix.c_str(), i);
    save_image(dir / (std::string(name) + ".png"),
               render(width, height, {box}, {Rgb{20, 20, 20}}));
    write_annotation_file(dir / (std::string(name) + ".txt"), std::vector<NormalizedBox>{box});
  }
}

}  // namespace zebrod::synth
