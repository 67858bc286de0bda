#include "zebrod/registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "zebrod/error.hpp"

namespace zebrod {

namespace {

using json = nlohmann::json;

constexpr int kCatalogVersion = 1;

Timestamp now_ms() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

json embedding_to_json(const Embedding& e) { return json(std::vector<double>(e.values().begin(), e.values().end())); }

json embedding_to_json_f32(const Embedding& e) { return json(e.to_f32()); }

Embedding embedding_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::BadFormat, "embedding must be a JSON array");
  return Embedding(j.get<std::vector<double>>());
}

Embedding embedding_from_json_f32(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::BadFormat, "embedding must be a JSON array");
  const auto v = j.get<std::vector<float>>();
  return Embedding(std::span<const float>(v));
}

}  // namespace

std::string format_timestamp(Timestamp t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  long frac = static_cast<long>(ms % 1000);
  if (frac < 0) {
    frac += 1000;
    secs -= 1;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03ldZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
  return buf;
}

Timestamp parse_timestamp(const std::string& iso) {
  std::tm tm{};
  int ms = 0;
  int n = std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%d.%dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                      &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &ms);
  if (n < 6) throw Error(ErrorCode::BadFormat, "bad timestamp '" + iso + "'");
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  const std::time_t secs = timegm(&tm);
  return Timestamp(std::chrono::milliseconds(static_cast<std::int64_t>(secs) * 1000 + ms));
}

std::string_view to_string(FlagStatus s) {
  switch (s) {
    case FlagStatus::Open: return "open";
    case FlagStatus::Resolved: return "resolved";
    case FlagStatus::Dismissed: return "dismissed";
  }
  return "open";
}

FlagStatus parse_flag_status(std::string_view s) {
  if (s == "open") return FlagStatus::Open;
  if (s == "resolved") return FlagStatus::Resolved;
  if (s == "dismissed") return FlagStatus::Dismissed;
  throw Error(ErrorCode::BadRequest, "unknown flag status '" + std::string(s) + "'");
}

void ClassifyParams::validate() const {
  if (!(tau > -1.0 && tau < 1.0)) throw Error(ErrorCode::InvalidConfig, "tau must lie in (-1, 1)");
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
}

Registry::Registry(std::size_t dim, HnswParams params) : dim_(dim), index_(dim, params) {}

Registry::Registry(Registry&& other) noexcept : dim_(other.dim_), index_(std::move(other.index_)) {
  std::unique_lock lock(other.mutex_);
  catalog_ = std::move(other.catalog_);
  flags_ = std::move(other.flags_);
  flag_pos_ = std::move(other.flag_pos_);
  flag_seq_ = other.flag_seq_;
  tau_default_ = other.tau_default_;
}

Registry::Prepared Registry::prepare(SkuRegistration reg, Timestamp now) const {
  if (reg.sku_id.empty()) throw Error(ErrorCode::InvalidPayload, "sku_id must be non-empty");
  if (reg.references.empty()) {
    throw Error(ErrorCode::EmptyReferences, "SKU " + reg.sku_id + " has no reference embeddings");
  }
  std::vector<Embedding> refs;
  refs.reserve(reg.references.size());
  for (const auto& r : reg.references) {
    if (r.dim() != dim_) {
      throw Error(ErrorCode::DimMismatch, "reference dim " + std::to_string(r.dim()) +
                                              " != catalog dim " + std::to_string(dim_));
    }
    refs.push_back(quantize(r));
  }
  Embedding c = centroid(refs);
  SkuRecord rec{std::move(reg.sku_id), std::move(reg.name), reg.price_cents, std::move(reg.category),
                std::move(c), refs.size(), now};
  return Prepared{std::move(rec), std::move(refs)};
}

SkuRecord Registry::commit(Prepared p) {
  Payload payload{p.record.sku_id, p.record.name, p.record.price_cents, p.record.category};
  const std::uint64_t id = index_.insert(p.record.centroid, std::move(payload));
  SkuRecord out = p.record;
  catalog_.emplace(out.sku_id, Entry{std::move(p.record), std::move(p.references), id});
  return out;
}

SkuRecord Registry::register_sku(SkuRegistration reg) {
  std::vector<SkuRegistration> one;
  one.push_back(std::move(reg));
  return register_batch(std::move(one)).front();
}

std::vector<SkuRecord> Registry::register_batch(std::vector<SkuRegistration> regs) {
  const Timestamp now = now_ms();
  std::unique_lock lock(mutex_);
  std::set<std::string> seen;
  std::vector<Prepared> prepared;
  prepared.reserve(regs.size());
  for (auto& reg : regs) {
    if (catalog_.contains(reg.sku_id) || !seen.insert(reg.sku_id).second) {
      throw Error(ErrorCode::DuplicateSku, "SKU " + reg.sku_id + " already registered");
    }
    prepared.push_back(prepare(std::move(reg), now));
  }
  std::vector<SkuRecord> out;
  out.reserve(prepared.size());
  for (auto& p : prepared) out.push_back(commit(std::move(p)));
  return out;
}

std::optional<Match> Registry::nearest(const Embedding& query, std::size_t k,
                                      SearchMode mode) const {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  std::shared_lock lock(mutex_);
  const std::vector<SearchHit> hits = mode == SearchMode::Exact ? index_.search_exact(query, k)
                                                                : index_.search_ann(query, k);
  if (hits.empty()) return std::nullopt;
  const SearchHit* best = &hits.front();
  for (const auto& h : hits) {
    if (h.score == best->score && h.payload.sku_id < best->payload.sku_id) best = &h;
  }
  return Match{best->payload.sku_id, best->payload.name, best->payload.price_cents, best->score};
}

Decision Registry::classify(const Embedding& query, const ClassifyParams& params,
                            SearchMode mode) const {
  params.validate();
  auto best = nearest(query, params.k, mode);
  if (!best) return Unknown{};
  if (best->score >= params.tau) return *std::move(best);
  return Unknown{best->sku_id, best->score};
}

std::string Registry::next_flag_id_locked() {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "flag-%06llu", static_cast<unsigned long long>(++flag_seq_));
  return buf;
}

UnknownFlag Registry::create_flag(const Embedding& embedding, std::string patch_ref, Unknown best) {
  std::vector<FlagRequest> one;
  one.push_back(FlagRequest{embedding, std::move(patch_ref), std::move(best)});
  const auto ids = create_flags(std::move(one));
  return get_flag(ids.front());
}

std::vector<std::string> Registry::create_flags(std::vector<FlagRequest> requests) {
  for (const auto& r : requests) {
    if (r.embedding.dim() != dim_) {
      throw Error(ErrorCode::DimMismatch, "flag embedding dim " + std::to_string(r.embedding.dim()) +
                                              " != catalog dim " + std::to_string(dim_));
    }
  }
  const Timestamp now = now_ms();
  std::unique_lock lock(mutex_);
  std::vector<std::string> ids;
  ids.reserve(requests.size());
  for (auto& r : requests) {
    UnknownFlag f;
    f.flag_id = next_flag_id_locked();
    f.embedding = std::move(r.embedding);
    f.patch_ref = std::move(r.patch_ref);
    f.best_sku_id = std::move(r.best.best_sku_id);
    f.best_score = r.best.best_score;
    f.created_at = now;
    flag_pos_.emplace(f.flag_id, flags_.size());
    ids.push_back(f.flag_id);
    flags_.push_back(std::move(f));
  }
  return ids;
}

UnknownFlag& Registry::open_flag_locked(const std::string& flag_id) {
  auto it = flag_pos_.find(flag_id);
  if (it == flag_pos_.end()) throw Error(ErrorCode::UnknownFlagId, "no flag " + flag_id);
  UnknownFlag& f = flags_[it->second];
  if (f.status != FlagStatus::Open) {
    throw Error(ErrorCode::FlagNotOpen, "flag " + flag_id + " is already " + std::string(to_string(f.status)));
  }
  return f;
}

SkuRecord Registry::resolve_flag(const std::string& flag_id, SkuRegistration details) {
  const Timestamp now = now_ms();
  std::unique_lock lock(mutex_);
  UnknownFlag& flag = open_flag_locked(flag_id);

  std::vector<Embedding> refs;
  refs.push_back(flag.embedding);
  for (auto& e : details.references) refs.push_back(std::move(e));

  SkuRecord result;
  auto existing = catalog_.find(details.sku_id);
  if (existing == catalog_.end()) {
    details.references = std::move(refs);
    Prepared p = prepare(std::move(details), now);
    result = commit(std::move(p));
  } else {
    Entry& entry = existing->second;
    SkuRegistration merged{entry.record.sku_id, entry.record.name, entry.record.price_cents,
                           entry.record.category, entry.references};
    for (auto& e : refs) merged.references.push_back(std::move(e));
    Prepared p = prepare(std::move(merged), entry.record.registered_at);
    Payload payload{p.record.sku_id, p.record.name, p.record.price_cents, p.record.category};
    const std::uint64_t new_id = index_.insert(p.record.centroid, std::move(payload));
    index_.remove(entry.record_id);
    entry.record = p.record;
    entry.references = std::move(p.references);
    entry.record_id = new_id;
    result = entry.record;
  }
  flag.status = FlagStatus::Resolved;
  flag.resolved_sku_id = result.sku_id;
  return result;
}

void Registry::dismiss_flag(const std::string& flag_id) {
  std::unique_lock lock(mutex_);
  open_flag_locked(flag_id).status = FlagStatus::Dismissed;
}

Registry::Entry& Registry::entry_locked(const std::string& sku_id) {
  auto it = catalog_.find(sku_id);
  if (it == catalog_.end()) throw Error(ErrorCode::UnknownSku, "no SKU " + sku_id);
  return it->second;
}

const Registry::Entry& Registry::entry_locked(const std::string& sku_id) const {
  auto it = catalog_.find(sku_id);
  if (it == catalog_.end()) throw Error(ErrorCode::UnknownSku, "no SKU " + sku_id);
  return it->second;
}

std::vector<SkuRecord> Registry::list_skus() const {
  std::shared_lock lock(mutex_);
  std::vector<SkuRecord> out;
  out.reserve(catalog_.size());
  for (const auto& [id, e] : catalog_) out.push_back(e.record);
  return out;
}

SkuRecord Registry::get_sku(const std::string& sku_id) const {
  std::shared_lock lock(mutex_);
  return entry_locked(sku_id).record;
}

bool Registry::contains(const std::string& sku_id) const {
  std::shared_lock lock(mutex_);
  return catalog_.contains(sku_id);
}

void Registry::remove_sku(const std::string& sku_id) {
  std::unique_lock lock(mutex_);
  const Entry& e = entry_locked(sku_id);
  index_.remove(e.record_id);
  catalog_.erase(sku_id);
}

SkuRecord Registry::update_price(const std::string& sku_id, std::uint64_t price_cents) {
  std::unique_lock lock(mutex_);
  Entry& e = entry_locked(sku_id);
  index_.update_payload(e.record_id, Payload{e.record.sku_id, e.record.name, price_cents, e.record.category});
  e.record.price_cents = price_cents;
  return e.record;
}

std::vector<Embedding> Registry::references(const std::string& sku_id) const {
  std::shared_lock lock(mutex_);
  return entry_locked(sku_id).references;
}

std::vector<UnknownFlag> Registry::list_flags(std::optional<FlagStatus> status) const {
  std::shared_lock lock(mutex_);
  std::vector<UnknownFlag> out;
  for (const auto& f : flags_) {
    if (!status || f.status == *status) out.push_back(f);
  }
  return out;
}

UnknownFlag Registry::get_flag(const std::string& flag_id) const {
  std::shared_lock lock(mutex_);
  auto it = flag_pos_.find(flag_id);
  if (it == flag_pos_.end()) throw Error(ErrorCode::UnknownFlagId, "no flag " + flag_id);
  return flags_[it->second];
}

std::size_t Registry::size() const {
  std::shared_lock lock(mutex_);
  return catalog_.size();
}

double Registry::tau_default() const {
  std::shared_lock lock(mutex_);
  return tau_default_;
}

void Registry::set_tau_default(double tau) {
  ClassifyParams{tau, 1}.validate();
  std::unique_lock lock(mutex_);
  tau_default_ = tau;
}

// --- persistence ---

nlohmann::json Registry::catalog_json() const {
  std::shared_lock lock(mutex_);
  return catalog_json_locked();
}

nlohmann::json Registry::catalog_json_locked() const {
  json skus = json::array();
  for (const auto& [id, e] : catalog_) {
    json refs = json::array();
    for (const auto& r : e.references) refs.push_back(embedding_to_json_f32(r));
    skus.push_back({{"sku_id", e.record.sku_id},
                    {"name", e.record.name},
                    {"price_cents", e.record.price_cents},
                    {"category", e.record.category},
                    {"references", std::move(refs)},
                    {"registered_at", format_timestamp(e.record.registered_at)}});
  }
  json flags = json::array();
  for (const auto& f : flags_) {
    json jf = {{"flag_id", f.flag_id},
               {"embedding", embedding_to_json(f.embedding)},
               {"patch_ref", f.patch_ref},
               {"created_at", format_timestamp(f.created_at)},
               {"status", to_string(f.status)}};
    jf["best_sku_id"] = f.best_sku_id ? json(*f.best_sku_id) : json(nullptr);
    jf["best_score"] = f.best_score ? json(*f.best_score) : json(nullptr);
    jf["resolved_sku_id"] = f.resolved_sku_id ? json(*f.resolved_sku_id) : json(nullptr);
    flags.push_back(std::move(jf));
  }
  return json{{"version", kCatalogVersion},
              {"tau_default", tau_default_},
              {"dim", dim_},
              {"skus", std::move(skus)},
              {"flags", std::move(flags)}};
}

std::filesystem::path Registry::catalog_path_for(const std::filesystem::path& snapshot) {
  return std::filesystem::path(snapshot.string() + ".catalog.json");
}

void Registry::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  if (path.has_parent_path()) {
    std::error_code mk;
    std::filesystem::create_directories(path.parent_path(), mk);
    if (mk) throw Error(ErrorCode::IoFailure, "cannot create " + path.parent_path().string());
  }
  index_.save_snapshot(path);
  const auto cpath = catalog_path_for(path);
  const auto tmp = std::filesystem::path(cpath.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << catalog_json_locked().dump(1);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, cpath, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot move catalog into place: " + ec.message());
}

Registry Registry::load(const std::filesystem::path& path, HnswParams params) {
  VectorIndex index = VectorIndex::load_snapshot(path, params);

  std::ifstream in(catalog_path_for(path));
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + catalog_path_for(path).string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("catalog JSON: ") + e.what());
  }

  try {
    if (doc.at("version").get<int>() != kCatalogVersion) {
      throw Error(ErrorCode::VersionMismatch, "unsupported catalog version");
    }
    Registry reg(index.dim(), index.params());
    reg.tau_default_ = doc.at("tau_default").get<double>();

    std::map<std::string, std::uint64_t> record_of;
    for (const auto& r : index.records()) {
      if (!record_of.emplace(r.payload.sku_id, r.record_id).second) {
        throw Error(ErrorCode::BadFormat, "snapshot holds two records for SKU " + r.payload.sku_id);
      }
    }
    for (const auto& js : doc.at("skus")) {
      SkuRegistration sr{js.at("sku_id").get<std::string>(), js.at("name").get<std::string>(),
                         js.at("price_cents").get<std::uint64_t>(), js.at("category").get<std::string>(), {}};
      for (const auto& jr : js.at("references")) sr.references.push_back(embedding_from_json_f32(jr));
      Prepared p = reg.prepare(std::move(sr), parse_timestamp(js.at("registered_at").get<std::string>()));
      auto rec = record_of.find(p.record.sku_id);
      if (rec == record_of.end()) {
        throw Error(ErrorCode::BadFormat, "SKU " + p.record.sku_id + " missing from snapshot");
      }
      const auto stored = index.get(rec->second);
      if (stored->vector != p.record.centroid.to_f32()) {
        throw Error(ErrorCode::BadFormat, "SKU " + p.record.sku_id + " centroid disagrees with snapshot");
      }
      const std::string sku = p.record.sku_id;
      reg.catalog_.emplace(sku, Entry{std::move(p.record), std::move(p.references), rec->second});
      record_of.erase(rec);
    }
    if (!record_of.empty()) {
      throw Error(ErrorCode::BadFormat, "snapshot record for unknown SKU " + record_of.begin()->first);
    }

    for (const auto& jf : doc.at("flags")) {
      UnknownFlag f;
      f.flag_id = jf.at("flag_id").get<std::string>();
      f.embedding = embedding_from_json(jf.at("embedding"));
      f.patch_ref = jf.at("patch_ref").get<std::string>();
      f.created_at = parse_timestamp(jf.at("created_at").get<std::string>());
      f.status = parse_flag_status(jf.at("status").get<std::string>());
      if (!jf.at("best_sku_id").is_null()) f.best_sku_id = jf["best_sku_id"].get<std::string>();
      if (!jf.at("best_score").is_null()) f.best_score = jf["best_score"].get<double>();
      if (!jf.at("resolved_sku_id").is_null()) f.resolved_sku_id = jf["resolved_sku_id"].get<std::string>();
      unsigned long long seq = 0;
      if (std::sscanf(f.flag_id.c_str(), "flag-%llu", &seq) == 1) {
        reg.flag_seq_ = std::max<std::uint64_t>(reg.flag_seq_, seq);
      }
      reg.flag_pos_.emplace(f.flag_id, reg.flags_.size());
      reg.flags_.push_back(std::move(f));
    }
    reg.index_ = std::move(index);
    return reg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("catalog JSON: ") + e.what());
  }
}

}  // namespace zebrod
