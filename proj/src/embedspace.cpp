#include "zebrod/embedspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "zebrod/error.hpp"
#include "zebrod/hash.hpp"

namespace zebrod {

namespace {

void require_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::BadFormat, "embedding contains non-finite value");
  }
}

void require_same_dim(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimMismatch, "embedding dims differ: " + std::to_string(a.dim()) +
                                            " vs " + std::to_string(b.dim()));
  }
}

Embedding gaussian_vector(std::uint64_t seed, std::size_t dim, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> v(dim);
  for (auto& x : v) x = dist(rng);
  return Embedding(std::move(v));
}

}  // namespace

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  require_finite(values_);
}

Embedding::Embedding(std::span<const float> values) : values_(values.begin(), values.end()) {
  require_finite(values_);
}

double Embedding::norm() const {
  double s = 0.0;
  for (double x : values_) s += x * x;
  return std::sqrt(s);
}

std::vector<float> Embedding::to_f32() const {
  return std::vector<float>(values_.begin(), values_.end());
}

double dot(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

Embedding normalize(const Embedding& e) {
  const double n = e.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  std::vector<double> out(e.values().begin(), e.values().end());
  for (auto& x : out) x /= n;
  return Embedding(std::move(out));
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw Error(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Embedding centroid(std::span<const Embedding> refs) {
  if (refs.empty()) throw Error(ErrorCode::EmptyList, "centroid of an empty list");
  const std::size_t dim = refs.front().dim();
  std::vector<double> sum(dim, 0.0);
  for (const auto& r : refs) {
    require_same_dim(refs.front(), r);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += r[i];
  }
  // The 1/n of the mean cancels under normalization.
  Embedding mean(std::move(sum));
  if (!(mean.norm() > 1e-12 * static_cast<double>(refs.size()))) {
    throw Error(ErrorCode::ZeroVector, "references cancel out (degenerate mean)");
  }
  return normalize(mean);
}

Embedding quantize(const Embedding& e) {
  auto f = e.to_f32();
  return Embedding(std::span<const float>(f));
}

// --- PatchHashEmbedder ---

PatchHashEmbedder::PatchHashEmbedder(std::uint64_t seed, std::size_t dim)
    : seed_(seed), dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding dim must be > 0");
  constexpr std::size_t kCells = kGrid * kGrid;
  projection_.resize(dim_ * kCells);
  std::mt19937_64 rng(splitmix64(seed_));
  for (auto& w : projection_) {
    // 53-bit uniform in [-1, 1); std::uniform_real_distribution is not
    // specified bit-for-bit across standard libraries.
    w = static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
  }
}

std::vector<double> PatchHashEmbedder::downsample(const Image& image) {
  std::vector<double> cells(kGrid * kGrid, 0.0);
  if (image.empty()) return cells;
  const int w = image.width();
  const int h = image.height();
  for (int gy = 0; gy < kGrid; ++gy) {
    // Cells cover [floor(g*W/16), floor((g+1)*W/16)), at least one pixel.
    const int y0 = gy * h / kGrid;
    const int y1 = std::max(y0 + 1, (gy + 1) * h / kGrid);
    for (int gx = 0; gx < kGrid; ++gx) {
      const int x0 = gx * w / kGrid;
      const int x1 = std::max(x0 + 1, (gx + 1) * w / kGrid);
      double sum = 0.0;
      for (int y = y0; y < std::min(y1, h); ++y) {
        const std::uint8_t* row = image.row(y);
        for (int x = x0; x < std::min(x1, w); ++x) {
          sum += 0.299 * row[3 * x] + 0.587 * row[3 * x + 1] + 0.114 * row[3 * x + 2];
        }
      }
      const int count = (std::min(y1, h) - y0) * (std::min(x1, w) - x0);
      cells[gy * kGrid + gx] = sum / (255.0 * count);
    }
  }
  return cells;
}

Embedding PatchHashEmbedder::embed(const Patch& patch) const {
  const auto cells = downsample(patch.pixels);
  constexpr std::size_t kCells = kGrid * kGrid;
  std::vector<double> out(dim_, 0.0);
  for (std::size_t d = 0; d < dim_; ++d) {
    const double* row = projection_.data() + d * kCells;
    double s = 0.0;
    for (std::size_t c = 0; c < kCells; ++c) s += row[c] * cells[c];
    out[d] = s;
  }
  Embedding e(std::move(out));
  if (!(e.norm() > 0.0)) {
    throw Error(ErrorCode::ProviderFailure, "patch projects to the zero vector");
  }
  return normalize(e);
}

// --- LabelOracleEmbedder ---

LabelOracleEmbedder::LabelOracleEmbedder(std::uint64_t seed, double epsilon, std::size_t dim)
    : seed_(seed), epsilon_(epsilon), dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding dim must be > 0");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::InvalidConfig, "noise scale must be finite and >= 0");
  }
}

Embedding LabelOracleEmbedder::anchor(std::uint32_t class_id) const {
  const std::uint64_t s = splitmix64(seed_ ^ splitmix64(0xA5C0000000000000ULL | class_id));
  return normalize(gaussian_vector(s, dim_, 1.0));
}

Embedding LabelOracleEmbedder::sample(std::uint32_t class_id, std::uint64_t sample_id) const {
  Embedding a = anchor(class_id);
  if (epsilon_ == 0.0) return a;
  const std::uint64_t s =
      splitmix64(splitmix64(seed_ + 0x51ULL) ^ splitmix64(class_id) ^ splitmix64(~sample_id));
  const Embedding noise =
      gaussian_vector(s, dim_, epsilon_ / std::sqrt(static_cast<double>(dim_)));
  std::vector<double> v(dim_);
  for (std::size_t i = 0; i < dim_; ++i) v[i] = a[i] + noise[i];
  return normalize(Embedding(std::move(v)));
}

Rgb LabelOracleEmbedder::class_color(std::uint32_t class_id) {
  if (class_id >= 0xFFFFFFu) {
    throw Error(ErrorCode::InvalidConfig, "class id exceeds the 24-bit colour code");
  }
  return Rgb{static_cast<std::uint8_t>(class_id >> 16),
             static_cast<std::uint8_t>(class_id >> 8),
             static_cast<std::uint8_t>(class_id)};
}

std::uint32_t LabelOracleEmbedder::class_from_color(Rgb c) {
  return (static_cast<std::uint32_t>(c.r) << 16) | (static_cast<std::uint32_t>(c.g) << 8) | c.b;
}

Embedding LabelOracleEmbedder::embed(const Patch& patch) const {
  if (patch.pixels.empty()) throw Error(ErrorCode::ProviderFailure, "empty patch");
  const Rgb c = patch.pixels.at(patch.width() / 2, patch.height() / 2);
  const std::uint32_t class_id = class_from_color(c);
  if (class_id == 0xFFFFFFu) {
    throw Error(ErrorCode::ProviderFailure, "patch centre is background; no class code");
  }
  std::uint64_t h = fnv1a64(patch.source_image_id);
  const double coords[4] = {patch.source_box.x_min, patch.source_box.y_min,
                            patch.source_box.x_max, patch.source_box.y_max};
  h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(coords), sizeof(coords)), h);
  return sample(class_id, h);
}

}  // namespace zebrod
