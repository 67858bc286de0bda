#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "zebrod/embedspace.hpp"

namespace zebrod {

struct Payload {
  std::string sku_id;
  std::string name;
  std::uint64_t price_cents = 0;
  std::string category;

  bool operator==(const Payload&) const = default;
};

struct VectorRecord {
  std::uint64_t record_id = 0;
  std::vector<float> vector;  // unit norm
  Payload payload;
};

struct HnswParams {
  std::size_t M = 16;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 512;
  std::uint64_t rng_seed = 0x5EB20D;

  // Throws Error(InvalidConfig).
  void validate() const;
};

struct SearchHit {
  std::uint64_t record_id = 0;
  double score = 0.0;
  Payload payload;
};

// Snapshot layout (all integers little-endian):
//   "ZBRD" | version u16 | dim u16 | metric u8 (0 = cosine) | rng_seed u64 |
//   count u64 | count x { record_id u64 | dim x f32 | sku_id, name, category,
//   reserved: u32-length-prefixed UTF-8 | price_cents u64 } | crc32 u32
inline constexpr std::uint16_t kSnapshotVersion = 1;

// Payload-carrying cosine index with an exact brute-force search (the oracle)
// and an HNSW graph for approximate search. Vectors are normalized on entry
// and stored as float32; scores are dot products accumulated in double.
//
// Thread safety: any number of concurrent searches, or one mutation.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim = kDefaultEmbeddingDim, HnswParams params = {});
  VectorIndex(const VectorIndex& other);
  VectorIndex& operator=(const VectorIndex& other);
  VectorIndex(VectorIndex&& other) noexcept;
  VectorIndex& operator=(VectorIndex&& other) noexcept;

  // Throws DimMismatch / ZeroVector / InvalidPayload.
  std::uint64_t insert(const Embedding& vector, Payload payload);

  std::vector<SearchHit> search_exact(const Embedding& query, std::size_t k) const;
  std::vector<SearchHit> search_ann(const Embedding& query, std::size_t k) const;
  std::vector<SearchHit> search_ann(const Embedding& query, std::size_t k,
                                    std::size_t ef_search) const;

  bool remove(std::uint64_t record_id);
  bool update_payload(std::uint64_t record_id, Payload payload);

  std::optional<VectorRecord> get(std::uint64_t record_id) const;
  // Live records in ascending record_id order.
  std::vector<VectorRecord> records() const;

  std::size_t size() const;
  std::size_t dim() const { return dim_; }
  const HnswParams& params() const { return params_; }

  std::vector<std::uint8_t> serialize() const;
  // rng_seed comes from the snapshot; other graph parameters from `params`.
  static VectorIndex deserialize(std::span<const std::uint8_t> bytes, HnswParams params = {});
  void save_snapshot(const std::filesystem::path& path) const;
  static VectorIndex load_snapshot(const std::filesystem::path& path, HnswParams params = {});

  // Tombstoned records trigger a rebuild once they exceed this share.
  static constexpr double kCompactionThreshold = 0.2;

 private:
  using Slot = std::uint32_t;

  struct Candidate {
    double dist;
    Slot slot;
    bool operator<(const Candidate& o) const {
      return dist < o.dist || (dist == o.dist && slot < o.slot);
    }
    bool operator>(const Candidate& o) const { return o < *this; }
  };

  const float* row(Slot s) const { return vectors_.data() + static_cast<std::size_t>(s) * dim_; }
  double dist_query(const float* q, Slot s) const;
  double dist_slots(Slot a, Slot b) const;
  std::vector<double> prepare_query(const Embedding& query) const;

  std::uint64_t insert_locked(std::vector<float> unit, Payload payload, std::uint64_t id);
  void link_slot(Slot slot);
  int draw_level();
  std::vector<Candidate> search_layer(const float* q, std::vector<Candidate> entry,
                                      std::size_t ef, int level, bool skip_deleted) const;
  std::vector<Slot> select_neighbors(std::vector<Candidate> candidates, std::size_t m) const;
  std::vector<SearchHit> to_hits(std::vector<std::pair<double, Slot>> scored, std::size_t k) const;
  void rebuild_locked();
  std::size_t max_links(int level) const { return level == 0 ? 2 * params_.M : params_.M; }

  std::size_t dim_;
  HnswParams params_;
  std::mt19937_64 rng_;
  double level_mult_;

  std::vector<float> vectors_;
  std::vector<std::uint64_t> ids_;
  std::vector<Payload> payloads_;
  std::vector<char> deleted_;
  std::vector<std::vector<std::vector<Slot>>> links_;  // slot -> level -> neighbours
  std::unordered_map<std::uint64_t, Slot> slot_of_;
  std::size_t deleted_count_ = 0;
  std::optional<Slot> entry_;
  int max_level_ = -1;
  std::uint64_t next_id_ = 1;

  mutable std::shared_mutex mutex_;
};

}  // namespace zebrod
