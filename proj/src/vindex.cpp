#include "zebrod/vindex.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <mutex>
#include <queue>

#include <zlib.h>

#include "zebrod/error.hpp"
#include "zebrod/kernels.hpp"

namespace zebrod {

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(ErrorCode::BadFormat, "snapshot record overruns file");
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32_z(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32_z(crc, bytes.data(), bytes.size()));
}

void validate_payload(const Payload& p) {
  if (p.sku_id.empty()) throw Error(ErrorCode::InvalidPayload, "sku_id must be non-empty");
}

constexpr char kMagic[4] = {'Z', 'B', 'R', 'D'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 1 + 8 + 8;

}  // namespace

void HnswParams::validate() const {
  if (M < 2) throw Error(ErrorCode::InvalidConfig, "HNSW M must be >= 2");
  if (ef_construction < M) throw Error(ErrorCode::InvalidConfig, "ef_construction must be >= M");
  if (ef_search < 1) throw Error(ErrorCode::InvalidConfig, "ef_search must be >= 1");
}

VectorIndex::VectorIndex(std::size_t dim, HnswParams params)
    : dim_(dim), params_(params), rng_(params.rng_seed) {
  if (dim == 0 || dim > 0xFFFF) throw Error(ErrorCode::InvalidConfig, "index dim must be in [1, 65535]");
  params_.validate();
  level_mult_ = 1.0 / std::log(static_cast<double>(params_.M));
}

VectorIndex::VectorIndex(const VectorIndex& other) {
  std::shared_lock lock(other.mutex_);
  dim_ = other.dim_;
  params_ = other.params_;
  rng_ = other.rng_;
  level_mult_ = other.level_mult_;
  vectors_ = other.vectors_;
  ids_ = other.ids_;
  payloads_ = other.payloads_;
  deleted_ = other.deleted_;
  links_ = other.links_;
  slot_of_ = other.slot_of_;
  deleted_count_ = other.deleted_count_;
  entry_ = other.entry_;
  max_level_ = other.max_level_;
  next_id_ = other.next_id_;
}

VectorIndex& VectorIndex::operator=(const VectorIndex& other) {
  if (this != &other) {
    VectorIndex copy(other);
    *this = std::move(copy);
  }
  return *this;
}

VectorIndex::VectorIndex(VectorIndex&& other) noexcept
    : dim_(other.dim_),
      params_(other.params_),
      rng_(other.rng_),
      level_mult_(other.level_mult_),
      vectors_(std::move(other.vectors_)),
      ids_(std::move(other.ids_)),
      payloads_(std::move(other.payloads_)),
      deleted_(std::move(other.deleted_)),
      links_(std::move(other.links_)),
      slot_of_(std::move(other.slot_of_)),
      deleted_count_(other.deleted_count_),
      entry_(other.entry_),
      max_level_(other.max_level_),
      next_id_(other.next_id_) {}

VectorIndex& VectorIndex::operator=(VectorIndex&& other) noexcept {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  dim_ = other.dim_;
  params_ = other.params_;
  rng_ = other.rng_;
  level_mult_ = other.level_mult_;
  vectors_ = std::move(other.vectors_);
  ids_ = std::move(other.ids_);
  payloads_ = std::move(other.payloads_);
  deleted_ = std::move(other.deleted_);
  links_ = std::move(other.links_);
  slot_of_ = std::move(other.slot_of_);
  deleted_count_ = other.deleted_count_;
  entry_ = other.entry_;
  max_level_ = other.max_level_;
  next_id_ = other.next_id_;
  return *this;
}

double VectorIndex::dist_query(const float* q, Slot s) const {
  return 1.0 - static_cast<double>(kernels::dot_f32(q, row(s), dim_));
}

double VectorIndex::dist_slots(Slot a, Slot b) const {
  return 1.0 - static_cast<double>(kernels::dot_f32(row(a), row(b), dim_));
}

std::vector<double> VectorIndex::prepare_query(const Embedding& query) const {
  if (query.dim() != dim_) {
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(query.dim()) +
                                            " != index dim " + std::to_string(dim_));
  }
  const Embedding unit = normalize(query);
  return {unit.values().begin(), unit.values().end()};
}

int VectorIndex::draw_level() {
  const double u = static_cast<double>((rng_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  return static_cast<int>(std::floor(-std::log(u) * level_mult_));
}

std::uint64_t VectorIndex::insert(const Embedding& vector, Payload payload) {
  if (vector.dim() != dim_) {
    throw Error(ErrorCode::DimMismatch, "vector dim " + std::to_string(vector.dim()) +
                                            " != index dim " + std::to_string(dim_));
  }
  validate_payload(payload);
  std::vector<float> unit = normalize(vector).to_f32();
  std::unique_lock lock(mutex_);
  return insert_locked(std::move(unit), std::move(payload), next_id_++);
}

std::uint64_t VectorIndex::insert_locked(std::vector<float> unit, Payload payload, std::uint64_t id) {
  const auto slot = static_cast<Slot>(ids_.size());
  vectors_.insert(vectors_.end(), unit.begin(), unit.end());
  ids_.push_back(id);
  payloads_.push_back(std::move(payload));
  deleted_.push_back(0);
  links_.emplace_back(static_cast<std::size_t>(draw_level()) + 1);
  slot_of_.emplace(id, slot);
  link_slot(slot);
  return id;
}

void VectorIndex::link_slot(Slot slot) {
  const int level = static_cast<int>(links_[slot].size()) - 1;
  if (!entry_) {
    entry_ = slot;
    max_level_ = level;
    return;
  }
  const float* q = row(slot);
  Candidate ep{dist_query(q, *entry_), *entry_};
  for (int lc = max_level_; lc > level; --lc) {
    ep = search_layer(q, {ep}, 1, lc, false).front();
  }
  std::vector<Candidate> eps{ep};
  for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
    std::vector<Candidate> found = search_layer(q, eps, params_.ef_construction, lc, false);
    std::vector<Slot> neighbours = select_neighbors(found, params_.M);
    links_[slot][lc] = neighbours;
    for (Slot n : neighbours) {
      auto& nl = links_[n][lc];
      nl.push_back(slot);
      if (nl.size() > max_links(lc)) {
        std::vector<Candidate> cands;
        cands.reserve(nl.size());
        for (Slot x : nl) cands.push_back({dist_slots(n, x), x});
        nl = select_neighbors(std::move(cands), max_links(lc));
      }
    }
    eps = std::move(found);
  }
  if (level > max_level_) {
    entry_ = slot;
    max_level_ = level;
  }
}

std::vector<VectorIndex::Candidate> VectorIndex::search_layer(const float* q,
                                                              std::vector<Candidate> entry,
                                                              std::size_t ef, int level,
                                                              bool skip_deleted) const {
  // Generation-tagged visited set, one per thread so concurrent readers never
  // share it.
  thread_local std::vector<std::uint32_t> tags;
  thread_local std::uint32_t generation = 0;
  if (tags.size() < ids_.size()) tags.resize(ids_.size(), 0);
  if (++generation == 0) {
    std::fill(tags.begin(), tags.end(), 0);
    generation = 1;
  }
  const std::uint32_t gen = generation;
  auto visit = [&](Slot s) {
    if (tags[s] == gen) return false;
    tags[s] = gen;
    return true;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
  std::priority_queue<Candidate> best;  // top() is the worst kept result
  for (const auto& c : entry) {
    if (!visit(c.slot)) continue;
    frontier.push(c);
    if (!(skip_deleted && deleted_[c.slot])) best.push(c);
  }
  while (best.size() > ef) best.pop();

  while (!frontier.empty()) {
    const Candidate c = frontier.top();
    if (best.size() >= ef && best.top() < c) break;
    frontier.pop();
    if (static_cast<int>(links_[c.slot].size()) <= level) continue;
    for (Slot n : links_[c.slot][level]) {
      if (!visit(n)) continue;
      const Candidate cand{dist_query(q, n), n};
      if (best.size() < ef || cand < best.top()) {
        frontier.push(cand);
        if (!(skip_deleted && deleted_[n])) {
          best.push(cand);
          if (best.size() > ef) best.pop();
        }
      }
    }
  }

  std::vector<Candidate> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Diversity heuristic: keep a candidate only if it is closer to the query than
// to every neighbour already kept.
std::vector<VectorIndex::Slot> VectorIndex::select_neighbors(std::vector<Candidate> candidates,
                                                             std::size_t m) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<Slot> kept;
  kept.reserve(m);
  for (const auto& c : candidates) {
    if (kept.size() >= m) break;
    bool diverse = true;
    for (Slot r : kept) {
      if (dist_slots(c.slot, r) < c.dist) {
        diverse = false;
        break;
      }
    }
    if (diverse) kept.push_back(c.slot);
  }
  return kept;
}

std::vector<SearchHit> VectorIndex::to_hits(std::vector<std::pair<double, Slot>> scored,
                                            std::size_t k) const {
  const auto better = [this](const std::pair<double, Slot>& a, const std::pair<double, Slot>& b) {
    if (a.first != b.first) return a.first > b.first;
    return ids_[a.second] < ids_[b.second];
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    better);
  std::vector<SearchHit> hits;
  hits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Slot s = scored[i].second;
    hits.push_back({ids_[s], std::clamp(scored[i].first, -1.0, 1.0), payloads_[s]});
  }
  return hits;
}

std::vector<SearchHit> VectorIndex::search_exact(const Embedding& query, std::size_t k) const {
  const std::vector<double> q = prepare_query(query);
  std::shared_lock lock(mutex_);
  if (k == 0 || ids_.empty()) return {};
  std::vector<double> scores(ids_.size());
  kernels::omp::dot_scores(q, vectors_, scores);
  std::vector<std::pair<double, Slot>> scored;
  scored.reserve(ids_.size() - deleted_count_);
  for (Slot s = 0; s < ids_.size(); ++s) {
    if (!deleted_[s]) scored.emplace_back(scores[s], s);
  }
  return to_hits(std::move(scored), k);
}

std::vector<SearchHit> VectorIndex::search_ann(const Embedding& query, std::size_t k) const {
  return search_ann(query, k, params_.ef_search);
}

std::vector<SearchHit> VectorIndex::search_ann(const Embedding& query, std::size_t k,
                                               std::size_t ef_search) const {
  const std::vector<double> q = prepare_query(query);
  std::shared_lock lock(mutex_);
  if (k == 0 || !entry_ || deleted_count_ == ids_.size()) return {};
  const std::vector<float> qf(q.begin(), q.end());
  Candidate ep{dist_query(qf.data(), *entry_), *entry_};
  for (int lc = max_level_; lc > 0; --lc) {
    ep = search_layer(qf.data(), {ep}, 1, lc, false).front();
  }
  const std::size_t ef = std::max({ef_search, k, std::size_t{1}});
  const std::vector<Candidate> found = search_layer(qf.data(), {ep}, ef, 0, true);
  std::vector<std::pair<double, Slot>> scored;
  scored.reserve(found.size());
  for (const auto& c : found) scored.emplace_back(kernels::dot(q.data(), row(c.slot), dim_), c.slot);
  return to_hits(std::move(scored), k);
}

bool VectorIndex::remove(std::uint64_t record_id) {
  std::unique_lock lock(mutex_);
  auto it = slot_of_.find(record_id);
  if (it == slot_of_.end()) return false;
  deleted_[it->second] = 1;
  slot_of_.erase(it);
  ++deleted_count_;
  if (static_cast<double>(deleted_count_) > kCompactionThreshold * static_cast<double>(ids_.size())) {
    rebuild_locked();
  }
  return true;
}

bool VectorIndex::update_payload(std::uint64_t record_id, Payload payload) {
  validate_payload(payload);
  std::unique_lock lock(mutex_);
  auto it = slot_of_.find(record_id);
  if (it == slot_of_.end()) return false;
  payloads_[it->second] = std::move(payload);
  return true;
}

std::optional<VectorRecord> VectorIndex::get(std::uint64_t record_id) const {
  std::shared_lock lock(mutex_);
  auto it = slot_of_.find(record_id);
  if (it == slot_of_.end()) return std::nullopt;
  const Slot s = it->second;
  return VectorRecord{ids_[s], std::vector<float>(row(s), row(s) + dim_), payloads_[s]};
}

std::vector<VectorRecord> VectorIndex::records() const {
  std::shared_lock lock(mutex_);
  std::vector<VectorRecord> out;
  out.reserve(ids_.size() - deleted_count_);
  for (Slot s = 0; s < ids_.size(); ++s) {
    if (deleted_[s]) continue;
    out.push_back({ids_[s], std::vector<float>(row(s), row(s) + dim_), payloads_[s]});
  }
  std::sort(out.begin(), out.end(),
            [](const VectorRecord& a, const VectorRecord& b) { return a.record_id < b.record_id; });
  return out;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mutex_);
  return ids_.size() - deleted_count_;
}

// Rebuilds the graph over live records in ascending id order with a freshly
// seeded generator, so the result depends only on the records and the seed.
void VectorIndex::rebuild_locked() {
  std::vector<std::tuple<std::uint64_t, std::vector<float>, Payload>> live;
  live.reserve(ids_.size() - deleted_count_);
  for (Slot s = 0; s < ids_.size(); ++s) {
    if (!deleted_[s]) {
      live.emplace_back(ids_[s], std::vector<float>(row(s), row(s) + dim_), std::move(payloads_[s]));
    }
  }
  std::sort(live.begin(), live.end(),
            [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
  vectors_.clear();
  ids_.clear();
  payloads_.clear();
  deleted_.clear();
  links_.clear();
  slot_of_.clear();
  deleted_count_ = 0;
  entry_.reset();
  max_level_ = -1;
  rng_.seed(params_.rng_seed);
  for (auto& [id, vec, payload] : live) insert_locked(std::move(vec), std::move(payload), id);
}

std::vector<std::uint8_t> VectorIndex::serialize() const {
  const std::vector<VectorRecord> recs = records();
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u16(kSnapshotVersion);
  w.u16(static_cast<std::uint16_t>(dim_));
  w.u8(0);
  w.u64(params_.rng_seed);
  w.u64(recs.size());
  for (const auto& r : recs) {
    w.u64(r.record_id);
    for (float v : r.vector) w.f32(v);
    w.str(r.payload.sku_id);
    w.str(r.payload.name);
    w.str(r.payload.category);
    w.str({});  // reserved
    w.u64(r.payload.price_cents);
  }
  w.u32(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

VectorIndex VectorIndex::deserialize(std::span<const std::uint8_t> bytes, HnswParams params) {
  if (bytes.size() < kHeaderBytes + 4) {
    throw Error(ErrorCode::ChecksumMismatch, "snapshot truncated");
  }
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (crc32_of(body) != tail.u32()) {
    throw Error(ErrorCode::ChecksumMismatch, "snapshot checksum mismatch");
  }
  ByteReader r(body);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw Error(ErrorCode::BadFormat, "not a snapshot file (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kSnapshotVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported snapshot version " + std::to_string(version));
  }
  const std::uint16_t dim = r.u16();
  if (r.u8() != 0) throw Error(ErrorCode::BadFormat, "unsupported metric tag");
  params.rng_seed = r.u64();
  const std::uint64_t count = r.u64();

  VectorIndex index(dim, params);
  std::uint64_t max_id = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = r.u64();
    std::vector<float> vec(dim);
    for (auto& v : vec) {
      v = r.f32();
      if (!std::isfinite(v)) throw Error(ErrorCode::BadFormat, "non-finite vector component");
    }
    Payload p;
    p.sku_id = r.str();
    p.name = r.str();
    p.category = r.str();
    (void)r.str();
    p.price_cents = r.u64();
    if (id == 0 || index.slot_of_.contains(id)) {
      throw Error(ErrorCode::BadFormat, "invalid or duplicate record id");
    }
    validate_payload(p);
    index.insert_locked(std::move(vec), std::move(p), id);
    max_id = std::max(max_id, id);
  }
  if (!r.done()) throw Error(ErrorCode::BadFormat, "trailing bytes after records");
  index.next_id_ = max_id + 1;
  return index;
}

void VectorIndex::save_snapshot(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()))) {
      throw Error(ErrorCode::IoFailure, "cannot write snapshot " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot move snapshot into place: " + ec.message());
}

VectorIndex VectorIndex::load_snapshot(const std::filesystem::path& path, HnswParams params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open snapshot " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, params);
}

}  // namespace zebrod
