#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "zebrod/embedspace.hpp"
#include "zebrod/labelio.hpp"
#include "zebrod/registry.hpp"

namespace zebrod {

struct GroundTruthItem {
  std::string image_id;
  std::string label;
  PixelBox box;
};

struct PredictionItem {
  std::string image_id;
  std::string label;
  PixelBox box;
  double confidence = 0.0;
};

struct MatchOutcome {
  std::size_t prediction = 0;  // index into the input predictions
  double confidence = 0.0;
  bool tp = false;
  std::optional<std::size_t> ground_truth;
};

// Predictions in descending confidence (stable on ties). Each takes the
// highest-IoU still-unmatched ground truth with the same image and label;
// IoU >= threshold makes it a TP.
std::vector<MatchOutcome> greedy_match(const std::vector<PredictionItem>& preds,
                                       const std::vector<GroundTruthItem>& gts,
                                       double iou_threshold = 0.5);

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

struct APResult {
  std::string label;
  double ap = 0.0;
  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t n_gt = 0;
  bool included = true;  // false when there is nothing to score
};

// `tp` is already in descending-confidence order. All-point interpolation.
APResult average_precision(const std::vector<bool>& tp, std::size_t n_gt, std::string label = {});

// Mean over included classes. Throws Error(NoClasses).
double map50(const std::vector<APResult>& per_class);

struct MapReport {
  std::vector<APResult> per_class;  // sorted by label
  double map = 0.0;
};

MapReport evaluate_map(const std::vector<PredictionItem>& preds,
                       const std::vector<GroundTruthItem>& gts, double iou_threshold = 0.5);

// Annotation lines plus a sixth confidence column.
std::vector<std::pair<NormalizedBox, double>> parse_predictions(std::string_view text);

// Reads every *.txt in both directories; image ids are file stems, labels are
// class ids. Boxes are compared in normalized coordinates (IoU is unchanged
// by per-axis scaling). A missing prediction file means no predictions.
MapReport evaluate_map_dirs(const std::filesystem::path& gt_dir,
                            const std::filesystem::path& pred_dir, double iou_threshold = 0.5);

nlohmann::json to_json(const MapReport& r);

// ------------------------------------------------------ incremental batches

struct BenchmarkConfig {
  std::size_t base_class_count = 100;
  std::size_t batch_size = 10;
  std::size_t batch_count = 4;
  std::size_t references_per_class = 5;
  std::size_t queries_per_class = 5;
  std::size_t unknown_class_count = 50;
  std::size_t dim = kDefaultEmbeddingDim;
  double epsilon = 0.1;
  double tau = ClassifyParams::kDefaultTau;
  std::size_t k = ClassifyParams::kDefaultK;
  SearchMode mode = SearchMode::Ann;
  std::uint64_t seed = 7;

  void validate() const;
  static BenchmarkConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct BenchmarkRow {
  std::size_t categories = 0;
  double top1_accuracy = 0.0;
  double unknown_recall = 0.0;
  double base_accuracy_exact = 0.0;
  double update_duration_ms = 0.0;
  std::size_t index_size = 0;
};

struct BenchmarkReport {
  BenchmarkConfig config;
  std::vector<BenchmarkRow> rows;
  // Exact-search decisions on the base-class queries never changed.
  bool base_decisions_unchanged = true;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

BenchmarkReport incremental_benchmark(const BenchmarkConfig& config);

// ------------------------------------------------------------------ tau sweep

struct LabeledQuery {
  Embedding embedding;
  std::optional<std::string> sku_id;  // nullopt: class not in the catalog
};

struct TauRow {
  double tau = 0.0;
  std::size_t correct_match = 0;
  std::size_t wrong_match = 0;
  std::size_t false_unknown = 0;
  std::size_t correct_unknown = 0;

  // Among Match decisions / among registered-class queries; 1 when empty.
  double precision() const;
  double recall() const;
};

// tau may be anything in [-1, 1]; scores are computed once with exact search.
std::vector<TauRow> tau_sweep(const Registry& registry, const std::vector<LabeledQuery>& queries,
                              const std::vector<double>& tau_grid,
                              std::size_t k = ClassifyParams::kDefaultK);

}  // namespace zebrod
