#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zebrod/embedspace.hpp"
#include "zebrod/image.hpp"
#include "zebrod/labelio.hpp"
#include "zebrod/pipeline.hpp"

namespace zebrod::synth {

// Seeded unit vectors with i.i.d. Gaussian coordinates.
std::vector<Embedding> random_unit_vectors(std::size_t n, std::size_t dim, std::uint64_t seed);

// Solid rectangles on a white canvas; rectangle i covers the pixel centres
// inside to_pixels(boxes[i]).
Image render(int width, int height, const std::vector<NormalizedBox>& boxes,
             const std::vector<Rgb>& colors);

struct Scene {
  CheckoutImage image;
  std::vector<NormalizedBox> boxes;  // class_id = oracle class
};

// One product per grid cell, coloured with LabelOracleEmbedder::class_color,
// so the oracle provider recovers the class from every crop.
Scene checkout_scene(const std::string& image_id, const std::vector<std::uint32_t>& classes,
                     int width = 640, int height = 480, std::uint64_t seed = 1);

// {id}.png + {id}.txt
void write_fixture(const std::filesystem::path& dir, const Scene& scene);

// n single-product images ({prefix}{i:05}.png + .txt) for augmentation runs.
void write_product_dataset(const std::filesystem::path& dir, std::size_t n, int width, int height,
                           std::uint64_t seed, const std::string& prefix = "img");

}  // namespace zebrod::synth
