#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "zebrod/embedspace.hpp"
#include "zebrod/vindex.hpp"

namespace zebrod {

using Timestamp = std::chrono::system_clock::time_point;

std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(const std::string& iso);

struct SkuRecord {
  std::string sku_id;
  std::string name;
  std::uint64_t price_cents = 0;
  std::string category;
  Embedding centroid;
  std::size_t reference_count = 0;
  Timestamp registered_at;

  bool operator==(const SkuRecord&) const = default;
};

struct SkuRegistration {
  std::string sku_id;
  std::string name;
  std::uint64_t price_cents = 0;
  std::string category;
  std::vector<Embedding> references;
};

struct ClassifyParams {
  static constexpr double kDefaultTau = 0.75;
  static constexpr std::size_t kDefaultK = 5;

  double tau = kDefaultTau;
  std::size_t k = kDefaultK;

  // Throws Error(InvalidConfig) unless tau in (-1, 1) and k >= 1.
  void validate() const;
};

enum class SearchMode { Ann, Exact };

struct Match {
  std::string sku_id;
  std::string name;
  std::uint64_t price_cents = 0;
  double score = 0.0;

  bool operator==(const Match&) const = default;
};

struct Unknown {
  std::optional<std::string> best_sku_id;
  std::optional<double> best_score;

  bool operator==(const Unknown&) const = default;
};

using Decision = std::variant<Match, Unknown>;

inline bool is_match(const Decision& d) { return std::holds_alternative<Match>(d); }

enum class FlagStatus { Open, Resolved, Dismissed };
std::string_view to_string(FlagStatus s);
FlagStatus parse_flag_status(std::string_view s);

struct UnknownFlag {
  std::string flag_id;
  Embedding embedding;
  std::string patch_ref;
  std::optional<std::string> best_sku_id;
  std::optional<double> best_score;
  Timestamp created_at;
  FlagStatus status = FlagStatus::Open;
  std::optional<std::string> resolved_sku_id;
};

struct FlagRequest {
  Embedding embedding;
  std::string patch_ref;
  Unknown best;
};

// SKU catalog plus open-set classifier. Each SKU is one centroid record in the
// vector index; its raw references stay in the catalog so the centroid can be
// recomputed when a flag is resolved into it.
//
// All mutations go through a single writer lock and validate fully before
// touching state, so a failed call leaves catalog, index and flags unchanged.
class Registry {
 public:
  explicit Registry(std::size_t dim = kDefaultEmbeddingDim, HnswParams params = {});
  Registry(Registry&& other) noexcept;
  Registry& operator=(Registry&&) = delete;
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  SkuRecord register_sku(SkuRegistration reg);
  // All-or-nothing.
  std::vector<SkuRecord> register_batch(std::vector<SkuRegistration> regs);

  Decision classify(const Embedding& query, const ClassifyParams& params = {},
                    SearchMode mode = SearchMode::Ann) const;

  // Best-scoring SKU among the k nearest, ties to the smallest sku_id; no threshold.
  std::optional<Match> nearest(const Embedding& query, std::size_t k = ClassifyParams::kDefaultK,
                               SearchMode mode = SearchMode::Ann) const;

  UnknownFlag create_flag(const Embedding& embedding, std::string patch_ref, Unknown best = {});
  // All-or-nothing; returns the new flag ids in request order.
  std::vector<std::string> create_flags(std::vector<FlagRequest> requests);

  // New sku_id: registers it with the flag embedding (+ extras) as references.
  // Existing sku_id: appends them and recomputes the centroid; the existing
  // name/price/category are kept.
  SkuRecord resolve_flag(const std::string& flag_id, SkuRegistration details);
  void dismiss_flag(const std::string& flag_id);

  std::vector<SkuRecord> list_skus() const;
  SkuRecord get_sku(const std::string& sku_id) const;
  bool contains(const std::string& sku_id) const;
  void remove_sku(const std::string& sku_id);
  SkuRecord update_price(const std::string& sku_id, std::uint64_t price_cents);
  std::vector<Embedding> references(const std::string& sku_id) const;

  std::vector<UnknownFlag> list_flags(std::optional<FlagStatus> status = std::nullopt) const;
  UnknownFlag get_flag(const std::string& flag_id) const;

  std::size_t size() const;
  std::size_t dim() const { return dim_; }
  double tau_default() const;
  void set_tau_default(double tau);
  const VectorIndex& index() const { return index_; }

  // Snapshot at `path`, catalog JSON at catalog_path_for(path).
  void save(const std::filesystem::path& path) const;
  static Registry load(const std::filesystem::path& path, HnswParams params = {});
  static std::filesystem::path catalog_path_for(const std::filesystem::path& snapshot);

  nlohmann::json catalog_json() const;

 private:
  struct Entry {
    SkuRecord record;
    std::vector<Embedding> references;  // float32-quantized
    std::uint64_t record_id = 0;
  };

  struct Prepared {
    SkuRecord record;
    std::vector<Embedding> references;
  };

  Prepared prepare(SkuRegistration reg, Timestamp now) const;
  SkuRecord commit(Prepared p);
  Entry& entry_locked(const std::string& sku_id);
  const Entry& entry_locked(const std::string& sku_id) const;
  UnknownFlag& open_flag_locked(const std::string& flag_id);
  std::string next_flag_id_locked();
  nlohmann::json catalog_json_locked() const;

  std::size_t dim_;
  VectorIndex index_;
  std::map<std::string, Entry> catalog_;
  std::vector<UnknownFlag> flags_;
  std::map<std::string, std::size_t> flag_pos_;
  std::uint64_t flag_seq_ = 0;
  double tau_default_ = ClassifyParams::kDefaultTau;

  mutable std::shared_mutex mutex_;
};

}  // namespace zebrod
