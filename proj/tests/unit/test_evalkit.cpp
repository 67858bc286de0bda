#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "zebrod/error.hpp"
#include "zebrod/evalkit.hpp"
#include "zebrod/synth.hpp"

using namespace zebrod;
namespace fs = std::filesystem;

namespace {

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

// AP as the mean, over ground truths, of the best precision reached at or
// beyond the recall where each one is found. Unfound ground truths add 0.
double reference_ap(const std::vector<bool>& tp, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::vector<double> prec, rec;
  std::size_t t = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    t += tp[i];
    prec.push_back(static_cast<double>(t) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(t) / static_cast<double>(n_gt));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    double best = 0.0;
    for (std::size_t j = i; j < tp.size(); ++j) best = std::max(best, prec[j]);
    sum += best;
  }
  return sum / static_cast<double>(n_gt);
}

GroundTruthItem gt(const std::string& img, const std::string& label, PixelBox b) {
  return {img, label, b};
}

PredictionItem pred(const std::string& img, const std::string& label, PixelBox b, double conf) {
  return {img, label, b, conf};
}

}  // namespace

TEST(GreedyMatch, IouGate) {
  const std::vector<GroundTruthItem> g{gt("i", "a", {0, 0, 10, 10})};
  // [0,10]x[0,10] vs [0,10]x[0,6.0] -> IoU 0.6; vs [0,10]x[0,4] -> 0.4
  EXPECT_TRUE(greedy_match({pred("i", "a", {0, 0, 10, 6}, 0.9)}, g)[0].tp);
  EXPECT_FALSE(greedy_match({pred("i", "a", {0, 0, 10, 4}, 0.9)}, g)[0].tp);
  EXPECT_FALSE(greedy_match({pred("i", "b", {0, 0, 10, 10}, 0.9)}, g)[0].tp);
  EXPECT_FALSE(greedy_match({pred("j", "a", {0, 0, 10, 10}, 0.9)}, g)[0].tp);
  EXPECT_TRUE(greedy_match({pred("i", "a", {0, 0, 10, 5}, 0.9)}, g)[0].tp);  // IoU exactly 0.5
}

TEST(GreedyMatch, SingleMatchPerGroundTruth) {
  const std::vector<GroundTruthItem> g{gt("i", "a", {0, 0, 10, 10})};
  const auto out = greedy_match({pred("i", "a", {0, 0, 10, 9}, 0.8), pred("i", "a", {0, 0, 10, 10}, 0.9)}, g);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].prediction, 1u);
  EXPECT_TRUE(out[0].tp);
  EXPECT_EQ(out[0].ground_truth, 0u);
  EXPECT_EQ(out[1].prediction, 0u);
  EXPECT_FALSE(out[1].tp);
}

TEST(GreedyMatch, TiesKeepInputOrderAndPickHighestIou) {
  const std::vector<GroundTruthItem> g{gt("i", "a", {0, 0, 10, 10}), gt("i", "a", {2, 0, 12, 10})};
  const auto out = greedy_match({pred("i", "a", {2, 0, 12, 10}, 0.5), pred("i", "a", {0, 0, 10, 10}, 0.5)}, g);
  EXPECT_EQ(out[0].prediction, 0u);
  EXPECT_EQ(out[0].ground_truth, 1u);
  EXPECT_EQ(out[1].ground_truth, 0u);
}

TEST(GreedyMatch, NeverReusesGroundTruthRandomized) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(0, 80), size(5, 30), conf(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GroundTruthItem> g;
    std::vector<PredictionItem> p;
    for (int i = 0; i < 10; ++i) {
      const double x = pos(rng), y = pos(rng);
      g.push_back(gt("img" + std::to_string(i % 2), std::to_string(i % 3), {x, y, x + size(rng), y + size(rng)}));
    }
    for (int i = 0; i < 25; ++i) {
      const double x = pos(rng), y = pos(rng);
      p.push_back(pred("img" + std::to_string(i % 2), std::to_string(i % 3), {x, y, x + size(rng), y + size(rng)}, conf(rng)));
    }
    const auto out = greedy_match(p, g, 0.1);
    std::vector<int> used(g.size(), 0);
    std::size_t tps = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i > 0) EXPECT_GE(out[i - 1].confidence, out[i].confidence);
      if (out[i].tp) {
        ++tps;
        ++used[*out[i].ground_truth];
        EXPECT_GE(iou(p[out[i].prediction].box, g[*out[i].ground_truth].box), 0.1);
      }
    }
    for (int u : used) EXPECT_LE(u, 1);
    EXPECT_LE(tps, std::min(p.size(), g.size()));
  }
}

TEST(AveragePrecision, HandExamples) {
  EXPECT_DOUBLE_EQ(average_precision({true, true, true}, 3).ap, 1.0);
  EXPECT_DOUBLE_EQ(average_precision({true, false}, 2).ap, 0.5);
  const APResult none = average_precision({}, 3);
  EXPECT_DOUBLE_EQ(none.ap, 0.0);
  EXPECT_TRUE(none.included);
  EXPECT_FALSE(average_precision({}, 0).included);
  const APResult only_fp = average_precision({false, false}, 0);
  EXPECT_TRUE(only_fp.included);
  EXPECT_DOUBLE_EQ(only_fp.ap, 0.0);
  // P/R: (1, 1/3), (.5, 1/3), (2/3, 2/3), (.5, 2/3): envelope 1*(1/3) + (2/3)*(1/3)
  EXPECT_NEAR(average_precision({true, false, true, false}, 3).ap, 5.0 / 9.0, 1e-12);
}

TEST(AveragePrecision, CurveAndCounts) {
  const APResult r = average_precision({true, false, true}, 4, "x");
  EXPECT_EQ(r.label, "x");
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.n_gt, 4u);
  ASSERT_EQ(r.curve.size(), 3u);
  for (std::size_t i = 1; i < r.curve.size(); ++i) EXPECT_GE(r.curve[i].recall, r.curve[i - 1].recall);
  EXPECT_DOUBLE_EQ(r.curve[2].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.curve[2].recall, 0.5);
}

TEST(AveragePrecision, MatchesReferenceOnRandomSequences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = rng() % 40;
    std::vector<bool> tp(n);
    std::size_t t = 0;
    for (std::size_t i = 0; i < n; ++i) t += (tp[i] = rng() % 3 != 0);
    const std::size_t n_gt = t + rng() % 5;
    const double ap = average_precision(tp, n_gt).ap;
    EXPECT_NEAR(ap, reference_ap(tp, n_gt), 1e-12);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(Map50, Means) {
  APResult a, b, excluded;
  a.ap = 1.0;
  b.ap = 0.5;
  excluded.ap = 0.0;
  excluded.included = false;
  EXPECT_DOUBLE_EQ(map50({a, b}), 0.75);
  EXPECT_DOUBLE_EQ(map50({b}), 0.5);
  EXPECT_DOUBLE_EQ(map50({a, b, excluded}), 0.75);
  EXPECT_EQ(code_of([] { map50({}); }), ErrorCode::NoClasses);
  EXPECT_EQ(code_of([&] { map50({excluded}); }), ErrorCode::NoClasses);
}

TEST(EvaluateMap, PerfectPredictionsOnFiveClasses) {
  std::vector<GroundTruthItem> g;
  std::vector<PredictionItem> p;
  for (int i = 0; i < 20; ++i) {
    const PixelBox b{10.0 * i, 5, 10.0 * i + 8, 20};
    g.push_back(gt("img" + std::to_string(i / 7), std::to_string(i % 5), b));
    p.push_back(pred("img" + std::to_string(i / 7), std::to_string(i % 5), b, 1.0));
  }
  const MapReport r = evaluate_map(p, g);
  EXPECT_EQ(r.per_class.size(), 5u);
  EXPECT_EQ(r.map, 1.0);
  EXPECT_EQ(r.per_class.front().label, "0");
}

TEST(EvaluateMap, InvariantUnderConfidenceRescaling) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 60), conf(0.01, 1);
  std::vector<GroundTruthItem> g;
  std::vector<PredictionItem> p;
  for (int i = 0; i < 30; ++i) {
    const double x = pos(rng), y = pos(rng);
    g.push_back(gt("a", std::to_string(i % 4), {x, y, x + 20, y + 20}));
    p.push_back(pred("a", std::to_string(i % 4), {x + pos(rng) / 6, y, x + 20, y + 20}, conf(rng)));
    p.push_back(pred("a", std::to_string((i + 1) % 4), {x, y, x + 20, y + 20}, conf(rng)));
  }
  const double base = evaluate_map(p, g).map;
  for (double s : {0.001, 0.5, 0.9}) {
    auto q = p;
    for (auto& x : q) x.confidence *= s;
    EXPECT_EQ(evaluate_map(q, g).map, base);
  }
}

TEST(ParsePredictions, SixColumns) {
  const auto rows = parse_predictions("1 0.5 0.5 0.2 0.2 0.75\n\n2 0.1 0.1 0.1 0.1 1\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].first.class_id, 1);
  EXPECT_EQ(rows[0].second, 0.75);
  try {
    parse_predictions("1 0.5 0.5 0.2 0.2 0.5\n1 0.5 0.5 0.2 0.2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
  }
  EXPECT_EQ(code_of([] { parse_predictions("1 0.5 0.5 0.2 0.2 1.5"); }), ErrorCode::RangeViolation);
  EXPECT_EQ(code_of([] { parse_predictions("1 1.5 0.5 0.2 0.2 0.5"); }), ErrorCode::RangeViolation);
}

TEST(EvaluateMapDirs, PerfectAndHalf) {
  const auto root = fs::temp_directory_path() / "zebrod_map_dirs";
  fs::remove_all(root);
  fs::create_directories(root / "gt");
  fs::create_directories(root / "pred");
  write_annotation_file(root / "gt" / "a.txt", std::vector<NormalizedBox>{{0, 0.25, 0.25, 0.2, 0.2}, {1, 0.75, 0.75, 0.2, 0.2}});
  write_annotation_file(root / "gt" / "b.txt", std::vector<NormalizedBox>{{0, 0.5, 0.5, 0.4, 0.4}});
  {
    std::ofstream(root / "pred" / "a.txt") << "0 0.25 0.25 0.2 0.2 0.9\n1 0.75 0.75 0.2 0.2 0.8\n";
    std::ofstream(root / "pred" / "b.txt") << "0 0.5 0.5 0.4 0.4 0.7\n";
  }
  EXPECT_DOUBLE_EQ(evaluate_map_dirs(root / "gt", root / "pred").map, 1.0);
  // Class 0: TP then a far-off FP at higher confidence on b -> [FP, TP, ...]
  {
    std::ofstream(root / "pred" / "b.txt") << "0 0.9 0.9 0.1 0.1 0.95\n";
  }
  const MapReport r = evaluate_map_dirs(root / "gt", root / "pred");
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_DOUBLE_EQ(r.per_class[0].ap, reference_ap({false, true}, 2));
  EXPECT_DOUBLE_EQ(r.per_class[1].ap, 1.0);
  fs::remove(root / "pred" / "b.txt");
  EXPECT_DOUBLE_EQ(evaluate_map_dirs(root / "gt", root / "pred").per_class[0].ap, 0.5);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("classes").size(), 2u);
  EXPECT_EQ(j.at("map50"), r.map);
  fs::remove_all(root);
}

TEST(BenchmarkConfig, ValidationAndJson) {
  BenchmarkConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  const auto j = BenchmarkConfig{}.to_json();
  const BenchmarkConfig back = BenchmarkConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  const auto partial = BenchmarkConfig::from_json({{"batch_count", 2}, {"mode", "exact"}});
  EXPECT_EQ(partial.batch_count, 2u);
  EXPECT_EQ(partial.mode, SearchMode::Exact);
  EXPECT_EQ(partial.base_class_count, 100u);
  EXPECT_EQ(code_of([] { BenchmarkConfig::from_json({{"mode", "fuzzy"}}); }), ErrorCode::InvalidConfig);
}

TEST(IncrementalBenchmark, DefaultScheduleAndFloors) {
  const BenchmarkReport r = incremental_benchmark(BenchmarkConfig{});
  ASSERT_EQ(r.rows.size(), 5u);
  const std::size_t want[] = {100, 110, 120, 130, 140};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.rows[i].categories, want[i]);
    EXPECT_EQ(r.rows[i].index_size, want[i]);
    EXPECT_GE(r.rows[i].top1_accuracy, 0.99);
    EXPECT_GE(r.rows[i].unknown_recall, 0.99);
    EXPECT_LT(r.rows[i].update_duration_ms, 1000.0);
  }
  EXPECT_TRUE(r.base_decisions_unchanged);
  const auto j = r.to_json();
  EXPECT_EQ(j["rows"].size(), 5u);
  const std::string csv = r.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.rfind("categories,", 0), 0u);
}

TEST(TauSweep, DegenerateThresholdsAndMonotonicity) {
  const LabelOracleEmbedder o(21, 0.1);
  Registry reg;
  for (std::uint32_t c = 0; c < 30; ++c) {
    std::vector<Embedding> refs;
    for (std::uint64_t s = 0; s < 5; ++s) refs.push_back(o.sample(c, s));
    reg.register_sku({"c" + std::to_string(c), "n", 1, "", refs});
  }
  std::vector<LabeledQuery> qs;
  for (std::uint32_t c = 0; c < 40; ++c) {
    for (std::uint64_t s = 100; s < 105; ++s) {
      qs.push_back({o.sample(c, s), c < 30 ? std::optional<std::string>("c" + std::to_string(c)) : std::nullopt});
    }
  }
  std::vector<double> grid{-1.0};
  for (int i = 0; i <= 40; ++i) grid.push_back(0.5 + 0.0125 * i);
  grid.push_back(1.0 - 1e-9);
  const auto rows = tau_sweep(reg, qs, grid);
  ASSERT_EQ(rows.size(), grid.size());
  EXPECT_EQ(rows.front().correct_unknown, 0u);
  EXPECT_EQ(rows.front().correct_match + rows.front().wrong_match, qs.size());
  EXPECT_EQ(rows.back().correct_match + rows.back().wrong_match, 0u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i].wrong_match, rows[i - 1].wrong_match);
  bool some_good = false;
  for (const auto& r : rows) {
    if (r.tau >= 0.6 && r.tau <= 0.9 && r.precision() >= 0.99 && r.recall() >= 0.99) some_good = true;
  }
  EXPECT_TRUE(some_good);
  EXPECT_EQ(code_of([&] { tau_sweep(reg, qs, {}); }), ErrorCode::InvalidConfig);
}
