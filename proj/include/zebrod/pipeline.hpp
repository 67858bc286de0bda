#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "zebrod/embedspace.hpp"
#include "zebrod/geometry.hpp"
#include "zebrod/registry.hpp"

namespace zebrod {

struct Detection {
  PixelBox box;
  double confidence = 1.0;
};

struct CheckoutImage {
  std::string image_id;
  Image pixels;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const CheckoutImage& image) const = 0;
};

// Ground-truth localization: returns the annotated boxes of the image (looked
// up by image_id) with confidence 1.
class FixtureDetector final : public Detector {
 public:
  explicit FixtureDetector(std::filesystem::path annotation_dir);
  explicit FixtureDetector(std::map<std::string, std::vector<NormalizedBox>> annotations);

  std::vector<Detection> detect(const CheckoutImage& image) const override;

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::vector<NormalizedBox>> annotations_;
};

struct HttpEndpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // /...

  // Throws Error(InvalidConfig).
  static HttpEndpoint parse(const std::string& url);
};

// Adapter to an external detection service: POST image/png body, JSON array
// of {x_min, y_min, x_max, y_max, confidence} in pixels back.
class RemoteDetector final : public Detector {
 public:
  static constexpr std::chrono::milliseconds kDefaultTimeout{5000};

  explicit RemoteDetector(const std::string& url, std::chrono::milliseconds timeout = kDefaultTimeout);

  std::vector<Detection> detect(const CheckoutImage& image) const override;

  // Throws Error(MalformedResponse).
  static std::vector<Detection> parse_response(const std::string& body, int img_w, int img_h);

 private:
  HttpEndpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

// Embedding provider backed by an external model server with the same wire
// shape as the remote detector: POST image/png patch, JSON array of numbers back.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  RemoteEmbedder(const std::string& url, std::size_t dim,
                 std::chrono::milliseconds timeout = RemoteDetector::kDefaultTimeout);

  std::size_t dim() const override { return dim_; }
  Embedding embed(const Patch& patch) const override;

 private:
  HttpEndpoint endpoint_;
  std::size_t dim_;
  std::chrono::milliseconds timeout_;
};

// Keeps flagged crops so an operator can look at them later. Refs are
// content hashes, so storing the same crop twice is idempotent.
class PatchStore {
 public:
  virtual ~PatchStore() = default;
  virtual std::string put(const Patch& patch) = 0;
  virtual std::optional<std::vector<std::uint8_t>> get_png(const std::string& ref) const = 0;
};

std::string patch_content_hash(const Patch& patch);

class MemoryPatchStore final : public PatchStore {
 public:
  std::string put(const Patch& patch) override;
  std::optional<std::vector<std::uint8_t>> get_png(const std::string& ref) const override;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<std::uint8_t>> pngs_;
};

class DirectoryPatchStore final : public PatchStore {
 public:
  explicit DirectoryPatchStore(std::filesystem::path dir);
  std::string put(const Patch& patch) override;
  std::optional<std::vector<std::uint8_t>> get_png(const std::string& ref) const override;

 private:
  std::filesystem::path dir_;
};

struct StageTimings {
  double detect_ms = 0.0;
  double crop_ms = 0.0;
  double embed_ms = 0.0;
  double search_ms = 0.0;
  double total_ms = 0.0;

  // Everything the pipeline itself adds on top of the models.
  double overhead_ms() const { return total_ms - embed_ms - detect_ms; }
};

struct LineItem {
  PixelBox box;
  double detector_confidence = 1.0;
  Decision decision;
  std::optional<std::string> flag_id;
};

struct Receipt {
  std::string image_id;
  std::vector<LineItem> items;
  std::int64_t subtotal_cents = 0;
  std::size_t unknown_count = 0;
  std::vector<std::string> flag_ids;
  StageTimings timings;
};

struct CheckoutOptions {
  ClassifyParams classify;
  SearchMode mode = SearchMode::Ann;
  int patch_size = kDefaultPatchSize;
  Rgb pad = kWhite;
  PatchStore* patch_store = nullptr;  // flags get an empty patch_ref without one
};

// detect -> crop -> embed -> classify -> receipt. Per-box work runs in
// parallel; results merge in detection order. Detector or provider failure
// aborts the whole receipt before any flag is committed.
Receipt process_checkout(const CheckoutImage& image, const Detector& detector,
                         const EmbeddingProvider& provider, Registry& registry,
                         const CheckoutOptions& options = {});

nlohmann::json to_json(const Decision& d);
nlohmann::json to_json(const Receipt& r, bool include_timings = true);

// Per-stage latency summaries across checkouts.
class LatencyRecorder {
 public:
  struct Summary {
    std::size_t count = 0;
    double mean_ms = 0.0;
    double p95_ms = 0.0;
  };

  void record(const StageTimings& t);
  std::size_t checkouts() const;
  std::map<std::string, Summary> summarize() const;
  nlohmann::json to_json() const;

 private:
  static constexpr std::size_t kWindow = 10000;

  mutable std::mutex mutex_;
  std::size_t total_ = 0;
  std::map<std::string, std::vector<double>> samples_;
};

}  // namespace zebrod
