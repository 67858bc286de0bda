#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zebrod/geometry.hpp"

namespace zebrod {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

// In-flight embedding. Math runs in double; long-lived storage (index,
// snapshot, catalog references) keeps 32-bit floats, see quantize().
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<double> values);
  explicit Embedding(std::span<const float> values);
  static Embedding zeros(std::size_t dim) { return Embedding(std::vector<double>(dim, 0.0)); }

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double norm() const;
  std::vector<float> to_f32() const;

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<double> values_;
};

double dot(const Embedding& a, const Embedding& b);

// Throws Error(ZeroVector).
Embedding normalize(const Embedding& e);

// Throws DimMismatch / ZeroVector. Result clamped to [-1, 1].
double cosine_similarity(const Embedding& a, const Embedding& b);

// normalize(mean(refs)). Throws EmptyList / DimMismatch / ZeroVector.
Embedding centroid(std::span<const Embedding> refs);

// Round-trips values through float32, the storage precision.
Embedding quantize(const Embedding& e);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  // Must be deterministic and safe to call concurrently.
  virtual Embedding embed(const Patch& patch) const = 0;
};

inline Embedding embed(const EmbeddingProvider& provider, const Patch& patch) {
  return provider.embed(patch);
}

// Deterministic stand-in for a learned embedder: 16x16 grayscale area
// downsample, fixed seeded random projection to `dim`, L2 normalization.
class PatchHashEmbedder final : public EmbeddingProvider {
 public:
  static constexpr int kGrid = 16;

  explicit PatchHashEmbedder(std::uint64_t seed, std::size_t dim = kDefaultEmbeddingDim);

  std::size_t dim() const override { return dim_; }
  Embedding embed(const Patch& patch) const override;

  // The 256 grayscale cell means in [0, 1], row-major.
  static std::vector<double> downsample(const Image& image);

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  std::vector<double> projection_;  // dim x 256, row-major
};

// Harness provider producing a separable embedding space. Each class gets a
// seeded random unit anchor; a sample is normalize(anchor + noise) where the
// noise is Gaussian with per-coordinate sigma = epsilon / sqrt(dim), so its
// expected norm is about epsilon.
//
// For patches, the class is read from the patch's centre pixel colour (see
// class_color) and the sample identity from the patch provenance, which lets
// synthetic checkout images flow through the real pipeline.
class LabelOracleEmbedder final : public EmbeddingProvider {
 public:
  explicit LabelOracleEmbedder(std::uint64_t seed, double epsilon = 0.1,
                               std::size_t dim = kDefaultEmbeddingDim);

  std::size_t dim() const override { return dim_; }
  double epsilon() const { return epsilon_; }
  Embedding embed(const Patch& patch) const override;

  Embedding anchor(std::uint32_t class_id) const;
  Embedding sample(std::uint32_t class_id, std::uint64_t sample_id) const;

  // 24-bit colour code for a class id; 0xFFFFFF is reserved for background.
  static Rgb class_color(std::uint32_t class_id);
  static std::uint32_t class_from_color(Rgb color);

 private:
  std::uint64_t seed_;
  double epsilon_;
  std::size_t dim_;
};

}  // namespace zebrod
