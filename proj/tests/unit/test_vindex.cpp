#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include <zlib.h>

#include "zebrod/error.hpp"
#include "zebrod/kernels.hpp"
#include "zebrod/synth.hpp"
#include "zebrod/vindex.hpp"

using namespace zebrod;
namespace fs = std::filesystem;

namespace {

Payload payload(std::size_t i) {
  return Payload{"sku-" + std::to_string(i), "item " + std::to_string(i), 100 + i, "cat"};
}

VectorIndex build(const std::vector<Embedding>& vs, HnswParams params = {}) {
  VectorIndex idx(vs.empty() ? kDefaultEmbeddingDim : vs.front().dim(), params);
  for (std::size_t i = 0; i < vs.size(); ++i) idx.insert(vs[i], payload(i));
  return idx;
}

// Brute force over records(): float32 storage times the normalized query,
// summed in long double, then sorted by (score desc, id asc).
std::vector<std::pair<std::uint64_t, double>> full_scan(const VectorIndex& idx, const Embedding& q,
                                                        std::size_t k) {
  long double qn = 0;
  for (double x : q.values()) qn += static_cast<long double>(x) * x;
  std::vector<double> unit(q.dim());
  const double norm = std::sqrt(static_cast<double>(qn));
  for (std::size_t d = 0; d < q.dim(); ++d) unit[d] = q[d] / norm;
  std::vector<std::pair<std::uint64_t, double>> all;
  for (const auto& r : idx.records()) {
    long double s = 0;
    for (std::size_t d = 0; d < r.vector.size(); ++d) s += static_cast<long double>(unit[d]) * r.vector[d];
    all.emplace_back(r.record_id, static_cast<double>(s));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

double recall_at(const VectorIndex& idx, const std::vector<Embedding>& queries, std::size_t k,
                 std::size_t ef) {
  std::size_t found = 0;
  for (const auto& q : queries) {
    const auto truth = idx.search_exact(q, k);
    const auto approx = idx.search_ann(q, k, ef);
    std::set<std::uint64_t> got;
    for (const auto& h : approx) got.insert(h.record_id);
    for (const auto& h : truth) found += got.count(h.record_id);
  }
  return static_cast<double>(found) / static_cast<double>(queries.size() * k);
}

template <typename Fn>
ErrorCode code_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::NotFound;
}

}  // namespace

TEST(VectorIndex, SelfRetrievalScoresOne) {
  VectorIndex idx(384);
  const auto v = synth::random_unit_vectors(1, 384, 1).front();
  const auto id = idx.insert(v, payload(0));
  const auto hits = idx.search_exact(v, 1);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].record_id, id);
  EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
  EXPECT_EQ(hits[0].payload, payload(0));
}

TEST(VectorIndex, DistinctIdsAndInputValidation) {
  VectorIndex idx(4);
  const Embedding a(std::vector<double>{1, 0, 0, 0});
  EXPECT_NE(idx.insert(a, payload(0)), idx.insert(a, payload(1)));
  EXPECT_EQ(code_of([&] { idx.insert(Embedding(std::vector<double>{1, 0, 0}), payload(2)); }),
            ErrorCode::DimMismatch);
  EXPECT_EQ(code_of([&] { idx.insert(Embedding::zeros(4), payload(2)); }), ErrorCode::ZeroVector);
  EXPECT_EQ(code_of([&] { idx.insert(a, Payload{}); }), ErrorCode::InvalidPayload);
  EXPECT_EQ(code_of([&] { idx.search_exact(Embedding(std::vector<double>{1, 0}), 1); }),
            ErrorCode::DimMismatch);
  EXPECT_EQ(code_of([&] { idx.search_ann(Embedding(std::vector<double>{1, 0}), 1); }),
            ErrorCode::DimMismatch);
  EXPECT_EQ(idx.size(), 2u);
}

TEST(HnswParams, Validation) {
  EXPECT_NO_THROW(HnswParams{}.validate());
  EXPECT_EQ(code_of([] { HnswParams{1, 200, 64, 0}.validate(); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { HnswParams{16, 8, 64, 0}.validate(); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { HnswParams{16, 200, 0, 0}.validate(); }), ErrorCode::InvalidConfig);
}

TEST(VectorIndex, TenThousandRecordsAllRetrievable) {
  const auto vs = synth::random_unit_vectors(10000, 384, 2);
  const VectorIndex idx = build(vs);
  EXPECT_EQ(idx.size(), 10000u);
  const auto recs = idx.records();
  ASSERT_EQ(recs.size(), 10000u);
  std::set<std::uint64_t> ids;
  for (const auto& r : recs) {
    ids.insert(r.record_id);
    ASSERT_TRUE(idx.get(r.record_id).has_value());
  }
  EXPECT_EQ(ids.size(), 10000u);
  for (std::size_t i = 0; i < vs.size(); i += 97) {
    const auto hits = idx.search_exact(vs[i], 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].payload, payload(i));
  }
}

TEST(SearchExact, EmptyIndexAndKBeyondSize) {
  VectorIndex idx(8);
  const auto q = synth::random_unit_vectors(1, 8, 3).front();
  EXPECT_TRUE(idx.search_exact(q, 5).empty());
  EXPECT_TRUE(idx.search_ann(q, 5).empty());
  for (const auto& v : synth::random_unit_vectors(3, 8, 4)) idx.insert(v, payload(idx.size()));
  EXPECT_EQ(idx.search_exact(q, 10).size(), 3u);
  EXPECT_EQ(idx.search_ann(q, 10).size(), 3u);
}

TEST(SearchExact, EqualsIndependentFullScan) {
  const auto vs = synth::random_unit_vectors(1000, 384, 5);
  const VectorIndex idx = build(vs);
  const auto queries = synth::random_unit_vectors(100, 384, 6);
  for (const auto& q : queries) {
    for (std::size_t k : {1u, 10u, 1000u}) {
      const auto hits = idx.search_exact(q, k);
      const auto oracle = full_scan(idx, q, k);
      ASSERT_EQ(hits.size(), oracle.size());
      for (std::size_t i = 0; i < hits.size(); ++i) {
        ASSERT_EQ(hits[i].record_id, oracle[i].first) << "rank " << i;
        ASSERT_NEAR(hits[i].score, oracle[i].second, 1e-12);
      }
    }
  }
}

TEST(SearchExact, TiesBreakToSmallerRecordId) {
  VectorIndex idx(3);
  const Embedding v(std::vector<double>{0, 1, 0});
  const auto a = idx.insert(v, payload(0));
  const auto b = idx.insert(v, payload(1));
  idx.insert(Embedding(std::vector<double>{1, 0, 0}), payload(2));
  const auto hits = idx.search_exact(v, 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].record_id, a);
  EXPECT_EQ(hits[1].record_id, b);
  EXPECT_EQ(hits[0].score, hits[1].score);
  const auto ann = idx.search_ann(v, 2);
  ASSERT_EQ(ann.size(), 2u);
  EXPECT_EQ(ann[0].record_id, a);
  EXPECT_EQ(ann[1].record_id, b);
}

TEST(SearchAnn, SingleRecordAlwaysReturned) {
  VectorIndex idx(16);
  const auto vs = synth::random_unit_vectors(11, 16, 7);
  const auto id = idx.insert(vs[0], payload(0));
  for (std::size_t i = 1; i < vs.size(); ++i) {
    const auto hits = idx.search_ann(vs[i], 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].record_id, id);
  }
}

class AnnOnTenThousand : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    index_ = new VectorIndex(build(synth::random_unit_vectors(10000, 384, 8)));
    queries_ = new std::vector<Embedding>(synth::random_unit_vectors(1000, 384, 9));
  }
  static void TearDownTestSuite() {
    delete index_;
    delete queries_;
  }
  static VectorIndex* index_;
  static std::vector<Embedding>* queries_;
};
VectorIndex* AnnOnTenThousand::index_ = nullptr;
std::vector<Embedding>* AnnOnTenThousand::queries_ = nullptr;

TEST_F(AnnOnTenThousand, RecallAtDefaults) {
  const std::size_t ef = index_->params().ef_search;
  EXPECT_GE(recall_at(*index_, *queries_, 1, ef), 0.95);
  EXPECT_GE(recall_at(*index_, *queries_, 10, ef), 0.90);
}

TEST_F(AnnOnTenThousand, RecallMonotoneInEf) {
  const double r16 = recall_at(*index_, *queries_, 10, 16);
  const double r64 = recall_at(*index_, *queries_, 10, 64);
  const double r256 = recall_at(*index_, *queries_, 10, 256);
  EXPECT_LE(r16, r64);
  EXPECT_LE(r64, r256);
}

TEST_F(AnnOnTenThousand, HitsSortedScoresInRangeAndBitwiseEqualToExact) {
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& q = (*queries_)[i];
    const auto hits = index_->search_ann(q, 10);
    for (std::size_t j = 0; j < hits.size(); ++j) {
      EXPECT_GE(hits[j].score, -1.0);
      EXPECT_LE(hits[j].score, 1.0);
      if (j > 0) {
        EXPECT_TRUE(hits[j - 1].score > hits[j].score ||
                    (hits[j - 1].score == hits[j].score && hits[j - 1].record_id < hits[j].record_id));
      }
    }
    const auto exact = index_->search_exact(q, 1);
    if (!hits.empty() && hits[0].record_id == exact[0].record_id) {
      EXPECT_EQ(hits[0].score, exact[0].score);
    }
  }
}

TEST(SearchAnn, DeterministicGivenSeedAndInsertOrder) {
  const auto vs = synth::random_unit_vectors(2000, 64, 10);
  const auto queries = synth::random_unit_vectors(50, 64, 11);
  HnswParams p;
  p.ef_search = 16;
  const VectorIndex a = build(vs, p);
  const VectorIndex b = build(vs, p);
  for (const auto& q : queries) {
    const auto ha = a.search_ann(q, 10);
    const auto hb = b.search_ann(q, 10);
    ASSERT_EQ(ha.size(), hb.size());
    for (std::size_t i = 0; i < ha.size(); ++i) {
      EXPECT_EQ(ha[i].record_id, hb[i].record_id);
      EXPECT_EQ(ha[i].score, hb[i].score);
    }
  }
}

TEST(Remove, ExistingAndAbsent) {
  VectorIndex idx(8);
  const auto vs = synth::random_unit_vectors(5, 8, 12);
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < vs.size(); ++i) ids.push_back(idx.insert(vs[i], payload(i)));
  EXPECT_TRUE(idx.remove(ids[2]));
  EXPECT_FALSE(idx.remove(ids[2]));
  EXPECT_FALSE(idx.remove(999999));
  EXPECT_EQ(idx.size(), 4u);
  EXPECT_FALSE(idx.get(ids[2]).has_value());
  for (const auto& h : idx.search_exact(vs[2], 5)) EXPECT_NE(h.record_id, ids[2]);
  for (const auto& h : idx.search_ann(vs[2], 5)) EXPECT_NE(h.record_id, ids[2]);
}

TEST(Remove, FiftyOfHundredLeavesOnlySurvivors) {
  const auto vs = synth::random_unit_vectors(100, 384, 13);
  VectorIndex idx(384);
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < vs.size(); ++i) ids.push_back(idx.insert(vs[i], payload(i)));
  std::set<std::uint64_t> survivors(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); i += 2) {
    ASSERT_TRUE(idx.remove(ids[i]));
    survivors.erase(ids[i]);
  }
  for (const auto& q : synth::random_unit_vectors(20, 384, 14)) {
    std::set<std::uint64_t> exact, ann;
    for (const auto& h : idx.search_exact(q, 50)) exact.insert(h.record_id);
    for (const auto& h : idx.search_ann(q, 50)) ann.insert(h.record_id);
    EXPECT_EQ(exact, survivors);
    for (auto id : ann) EXPECT_TRUE(survivors.count(id));
  }
}

TEST(Remove, AnnStillFindsSurvivorsAfterHeavyDeletion) {
  const auto vs = synth::random_unit_vectors(3000, 64, 15);
  VectorIndex idx(64);
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < vs.size(); ++i) ids.push_back(idx.insert(vs[i], payload(i)));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i % 3 != 0) idx.remove(ids[i]);
  }
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < ids.size(); i += 3) {
    const auto h = idx.search_ann(vs[i], 1);
    hit += !h.empty() && h[0].record_id == ids[i];
    ++total;
  }
  EXPECT_GE(static_cast<double>(hit) / total, 0.99);
}

TEST(UpdatePayload, ChangesPayloadOnly) {
  VectorIndex idx(8);
  const auto v = synth::random_unit_vectors(1, 8, 16).front();
  const auto id = idx.insert(v, payload(0));
  const auto before = idx.get(id)->vector;
  Payload p = payload(0);
  p.price_cents = 999;
  EXPECT_TRUE(idx.update_payload(id, p));
  EXPECT_FALSE(idx.update_payload(id + 100, p));
  EXPECT_EQ(idx.get(id)->payload.price_cents, 999u);
  EXPECT_EQ(idx.get(id)->vector, before);
}

TEST(Snapshot, RoundTripGivesBitwiseEqualExactResults) {
  const auto vs = synth::random_unit_vectors(100, 384, 17);
  VectorIndex idx = build(vs);
  idx.remove(idx.records()[10].record_id);
  const auto path = fs::temp_directory_path() / "zebrod_vindex_roundtrip.zbrd";
  idx.save_snapshot(path);
  const VectorIndex back = VectorIndex::load_snapshot(path);
  EXPECT_EQ(back.size(), idx.size());
  for (const auto& q : synth::random_unit_vectors(30, 384, 18)) {
    const auto a = idx.search_exact(q, 100);
    const auto b = back.search_exact(q, 100);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].record_id, b[i].record_id);
      EXPECT_EQ(a[i].score, b[i].score);
      EXPECT_EQ(a[i].payload, b[i].payload);
    }
  }
  // New inserts continue past the highest stored id.
  VectorIndex more = back;
  const auto fresh = more.insert(vs[0], payload(500));
  for (const auto& r : idx.records()) EXPECT_NE(r.record_id, fresh);
  fs::remove(path);
}

TEST(Snapshot, ReloadedGraphIsDeterministic) {
  const VectorIndex idx = build(synth::random_unit_vectors(500, 32, 19));
  const auto bytes = idx.serialize();
  const VectorIndex a = VectorIndex::deserialize(bytes);
  const VectorIndex b = VectorIndex::deserialize(bytes);
  EXPECT_EQ(a.serialize(), bytes);
  for (const auto& q : synth::random_unit_vectors(20, 32, 20)) {
    const auto ha = a.search_ann(q, 5, 8);
    const auto hb = b.search_ann(q, 5, 8);
    ASSERT_EQ(ha.size(), hb.size());
    for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].record_id, hb[i].record_id);
  }
}

TEST(Snapshot, TruncatedFileIsChecksumMismatch) {
  const VectorIndex idx = build(synth::random_unit_vectors(10, 16, 21));
  auto bytes = idx.serialize();
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{3}}) {
    std::vector<std::uint8_t> shorter(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_EQ(code_of([&] { VectorIndex::deserialize(shorter); }), ErrorCode::ChecksumMismatch);
  }
  const auto path = fs::temp_directory_path() / "zebrod_vindex_trunc.zbrd";
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() - 7));
  }
  EXPECT_EQ(code_of([&] { VectorIndex::load_snapshot(path); }), ErrorCode::ChecksumMismatch);
  fs::remove(path);

  bytes[20] ^= 0x40;
  EXPECT_EQ(code_of([&] { VectorIndex::deserialize(bytes); }), ErrorCode::ChecksumMismatch);
}

TEST(Snapshot, EmptyIndexAndMissingFile) {
  const VectorIndex empty(384);
  const VectorIndex back = VectorIndex::deserialize(empty.serialize());
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.dim(), 384u);
  EXPECT_EQ(code_of([] { VectorIndex::load_snapshot("/nonexistent/dir/x.zbrd"); }), ErrorCode::IoFailure);
}

TEST(Snapshot, UnknownVersionIsVersionMismatch) {
  auto bytes = VectorIndex(4).serialize();
  bytes[4] = 9;  // version follows the 4-byte magic
  const std::size_t body = bytes.size() - 4;
  const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)));
  for (int i = 0; i < 4; ++i) bytes[body + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  EXPECT_EQ(code_of([&] { VectorIndex::deserialize(bytes); }), ErrorCode::VersionMismatch);
}

TEST(VectorIndex, InsertCostGrowsSubLinearly) {
  // Mean per-insert time over a window around n=1k vs around n=100k.
  const std::size_t dim = 32, window = 1000, target = 100000;
  HnswParams p;
  p.ef_construction = 64;
  VectorIndex idx(dim, p);
  const auto vs = synth::random_unit_vectors(target + window, dim, 22);
  using clock = std::chrono::steady_clock;
  auto timed = [&](std::size_t from, std::size_t to) {
    const auto t0 = clock::now();
    for (std::size_t i = from; i < to; ++i) idx.insert(vs[i], payload(i));
    return std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(to - from);
  };
  timed(0, window);
  const double small = timed(window, 2 * window);
  timed(2 * window, target);
  const double large = timed(target, target + window);
  RecordProperty("mean_insert_us_1k", std::to_string(small * 1e6));
  RecordProperty("mean_insert_us_100k", std::to_string(large * 1e6));
  EXPECT_LT(large, 20.0 * small);
}
