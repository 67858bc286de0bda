#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "zebrod/error.hpp"
#include "zebrod/pipeline.hpp"
#include "zebrod/registry.hpp"

namespace zebrod {

inline constexpr std::string_view kVersion = "0.1.0";

struct DetectorConfig {
  enum class Mode { Fixture, Remote } mode = Mode::Fixture;
  std::filesystem::path fixtures_dir;  // {id}.png|jpg + {id}.txt; also serves {fixture_id} in remote mode
  std::string endpoint;
  std::chrono::milliseconds timeout = RemoteDetector::kDefaultTimeout;
};

struct ProviderConfig {
  enum class Mode { PatchHash, LabelOracle, External } mode = Mode::PatchHash;
  std::uint64_t seed = 42;
  double epsilon = 0.1;
  std::size_t dim = kDefaultEmbeddingDim;
  std::string endpoint;
  std::chrono::milliseconds timeout = RemoteDetector::kDefaultTimeout;
};

struct ApiConfig {
  std::string bind_addr = "127.0.0.1:8080";
  double tau_default = ClassifyParams::kDefaultTau;
  std::size_t k_default = ClassifyParams::kDefaultK;
  SearchMode search_mode = SearchMode::Ann;
  std::filesystem::path snapshot_path;
  std::filesystem::path patch_dir;  // empty: flagged crops kept in memory
  DetectorConfig detector;
  ProviderConfig provider;
  std::optional<std::string> auth_token;
  int threads = 8;

  // Throws Error(InvalidConfig).
  void validate() const;
  static ApiConfig from_json(const nlohmann::json& j);
  // BIND_ADDR, TAU_DEFAULT, SNAPSHOT_PATH, AUTH_TOKEN.
  void apply_env(const std::function<const char*(const char*)>& getenv_fn);
  // File (optional) then environment.
  static ApiConfig load(const std::optional<std::filesystem::path>& file,
                        const std::function<const char*(const char*)>& getenv_fn);

  std::pair<std::string, int> host_port() const;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& c);
std::unique_ptr<Detector> make_detector(const DetectorConfig& c);

int http_status(ErrorCode code);
nlohmann::json error_body(ErrorCode code, const std::string& message,
                          const nlohmann::json& details = nullptr);

nlohmann::json to_json(const SkuRecord& r, bool include_vector = false);
nlohmann::json to_json(const UnknownFlag& f);

// Base64 of arbitrary bytes and back (whitespace tolerated). Decoding throws
// Error(BadRequest).
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

class ApiService {
 public:
  explicit ApiService(ApiConfig config);
  ~ApiService();
  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  // Binds config.bind_addr (port 0 picks a free one); returns the port.
  int bind();
  // Blocks until stop().
  void listen();
  void stop();
  void wait_until_ready() const;

  std::shared_ptr<Registry> registry() const;
  const ApiConfig& config() const { return config_; }
  const LatencyRecorder& metrics() const { return metrics_; }

 private:
  struct Impl;

  ApiConfig config_;
  LatencyRecorder metrics_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace zebrod
