#include "zebrod/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "zebrod/error.hpp"
#include "zebrod/geometry.hpp"

namespace zebrod {

std::vector<MatchOutcome> greedy_match(const std::vector<PredictionItem>& preds,
                                       const std::vector<GroundTruthItem>& gts,
                                       double iou_threshold) {
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_key;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    by_key[{gts[g].image_id, gts[g].label}].push_back(g);
  }
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });

  std::vector<bool> used(gts.size(), false);
  std::vector<MatchOutcome> out;
  out.reserve(preds.size());
  for (std::size_t p : order) {
    MatchOutcome m{p, preds[p].confidence, false, std::nullopt};
    auto it = by_key.find({preds[p].image_id, preds[p].label});
    if (it != by_key.end()) {
      double best = -1.0;
      std::optional<std::size_t> best_g;
      for (std::size_t g : it->second) {
        if (used[g]) continue;
        const double v = iou(preds[p].box, gts[g].box);
        if (v > best) {
          best = v;
          best_g = g;
        }
      }
      if (best_g && best >= iou_threshold) {
        used[*best_g] = true;
        m.tp = true;
        m.ground_truth = best_g;
      }
    }
    out.push_back(m);
  }
  return out;
}

APResult average_precision(const std::vector<bool>& tp, std::size_t n_gt, std::string label) {
  APResult r;
  r.label = std::move(label);
  r.n_gt = n_gt;
  if (n_gt == 0 && tp.empty()) {
    r.included = false;
    return r;
  }
  r.curve.reserve(tp.size());
  for (bool t : tp) {
    t ? ++r.tp : ++r.fp;
    const double precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    const double recall = n_gt == 0 ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(n_gt);
    r.curve.push_back({precision, recall});
  }
  if (n_gt == 0 || r.tp == 0) return r;

  std::vector<double> mrec{0.0};
  std::vector<double> mpre{0.0};
  for (const auto& pt : r.curve) {
    mrec.push_back(pt.recall);
    mpre.push_back(pt.precision);
  }
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < mrec.size(); ++i) {
    if (mrec[i + 1] != mrec[i]) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
  }
  r.ap = std::clamp(ap, 0.0, 1.0);
  return r;
}

double map50(const std::vector<APResult>& per_class) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : per_class) {
    if (!r.included) continue;
    sum += r.ap;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::NoClasses, "no class has ground truth or predictions");
  return sum / static_cast<double>(n);
}

MapReport evaluate_map(const std::vector<PredictionItem>& preds,
                       const std::vector<GroundTruthItem>& gts, double iou_threshold) {
  std::map<std::string, std::size_t> n_gt;
  for (const auto& g : gts) ++n_gt[g.label];
  std::map<std::string, std::vector<bool>> seq;
  for (const auto& label : n_gt) seq[label.first];
  for (const auto& m : greedy_match(preds, gts, iou_threshold)) {
    seq[preds[m.prediction].label].push_back(m.tp);
  }
  MapReport report;
  for (auto& [label, tp] : seq) {
    const auto it = n_gt.find(label);
    report.per_class.push_back(average_precision(tp, it == n_gt.end() ? 0 : it->second, label));
  }
  report.map = map50(report.per_class);
  return report;
}

std::vector<std::pair<NormalizedBox, double>> parse_predictions(std::string_view text) {
  std::vector<std::pair<NormalizedBox, double>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    if (tokens.size() != 6) {
      throw ParseError(ErrorCode::MalformedLine, line_no,
                       "expected 6 fields, got " + std::to_string(tokens.size()));
    }
    std::vector<NormalizedBox> box;
    try {
      box = parse_annotation(tokens[0] + " " + tokens[1] + " " + tokens[2] + " " + tokens[3] +
                             " " + tokens[4]);
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      throw ParseError(e.code(), line_no, msg.substr(msg.find(": ") + 2));
    }
    double conf = 0.0;
    std::size_t used = 0;
    try {
      conf = std::stod(tokens[5], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tokens[5].size()) {
      throw ParseError(ErrorCode::MalformedLine, line_no,
                       "non-numeric confidence: '" + tokens[5] + "'");
    }
    if (!(conf >= 0.0 && conf <= 1.0)) {
      throw ParseError(ErrorCode::RangeViolation, line_no, "confidence outside [0,1]");
    }
    out.emplace_back(box.front(), conf);
  }
  return out;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::filesystem::path> txt_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoFailure, dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

MapReport evaluate_map_dirs(const std::filesystem::path& gt_dir,
                            const std::filesystem::path& pred_dir, double iou_threshold) {
  std::vector<GroundTruthItem> gts;
  std::vector<PredictionItem> preds;
  for (const auto& path : txt_files(gt_dir)) {
    for (const auto& b : read_annotation_file(path).boxes) {
      gts.push_back({path.stem().string(), std::to_string(b.class_id), to_pixels(b, 1.0, 1.0)});
    }
  }
  for (const auto& path : txt_files(pred_dir)) {
    std::vector<std::pair<NormalizedBox, double>> parsed;
    try {
      parsed = parse_predictions(read_text(path));
    } catch (const ParseError& e) {
      throw ParseError(e.code(), e.line(), path.filename().string() + ": " +
                                               std::string(e.what()).substr(
                                                   std::string(e.what()).find(": ") + 2));
    }
    for (const auto& [b, conf] : parsed) {
      preds.push_back(
          {path.stem().string(), std::to_string(b.class_id), to_pixels(b, 1.0, 1.0), conf});
    }
  }
  return evaluate_map(preds, gts, iou_threshold);
}

nlohmann::json to_json(const MapReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    classes.push_back({{"label", c.label},
                       {"ap", c.ap},
                       {"tp", c.tp},
                       {"fp", c.fp},
                       {"n_gt", c.n_gt},
                       {"included", c.included}});
  }
  return {{"map50", r.map}, {"classes", std::move(classes)}};
}

// ------------------------------------------------------ incremental batches

void BenchmarkConfig::validate() const {
  const std::pair<const char*, std::size_t> counts[] = {
      {"base_class_count", base_class_count},       {"batch_size", batch_size},
      {"batch_count", batch_count},                 {"references_per_class", references_per_class},
      {"queries_per_class", queries_per_class},     {"unknown_class_count", unknown_class_count},
      {"dim", dim},                                 {"k", k}};
  for (const auto& [name, v] : counts) {
    if (v < 1) throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be >= 1");
  }
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilon must be >= 0");
  ClassifyParams{tau, k}.validate();
  const std::size_t classes = base_class_count + batch_size * batch_count + unknown_class_count;
  if (classes >= 0xFFFFFFu) throw Error(ErrorCode::InvalidConfig, "too many classes");
}

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "benchmark config must be an object");
  BenchmarkConfig c;
  try {
    c.base_class_count = j.value("base_class_count", c.base_class_count);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.batch_count = j.value("batch_count", c.batch_count);
    c.references_per_class = j.value("references_per_class", c.references_per_class);
    c.queries_per_class = j.value("queries_per_class", c.queries_per_class);
    c.unknown_class_count = j.value("unknown_class_count", c.unknown_class_count);
    c.dim = j.value("dim", c.dim);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.tau = j.value("tau", c.tau);
    c.k = j.value("k", c.k);
    c.seed = j.value("seed", c.seed);
    const std::string mode = j.value("mode", std::string("ann"));
    if (mode == "ann") {
      c.mode = SearchMode::Ann;
    } else if (mode == "exact") {
      c.mode = SearchMode::Exact;
    } else {
      throw Error(ErrorCode::InvalidConfig, "mode must be 'ann' or 'exact'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

nlohmann::json BenchmarkConfig::to_json() const {
  return {{"base_class_count", base_class_count},
          {"batch_size", batch_size},
          {"batch_count", batch_count},
          {"references_per_class", references_per_class},
          {"queries_per_class", queries_per_class},
          {"unknown_class_count", unknown_class_count},
          {"dim", dim},
          {"epsilon", epsilon},
          {"tau", tau},
          {"k", k},
          {"mode", mode == SearchMode::Ann ? "ann" : "exact"},
          {"seed", seed}};
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  double max_update = 0.0;
  for (const auto& r : rows) {
    max_update = std::max(max_update, r.update_duration_ms);
    rows_json.push_back({{"categories", r.categories},
                         {"top1_accuracy", r.top1_accuracy},
                         {"unknown_recall", r.unknown_recall},
                         {"base_accuracy_exact", r.base_accuracy_exact},
                         {"update_duration_ms", r.update_duration_ms},
                         {"index_size", r.index_size}});
  }
  return {{"config", config.to_json()},
          {"rows", std::move(rows_json)},
          {"base_decisions_unchanged", base_decisions_unchanged},
          {"max_update_duration_ms", max_update}};
}

std::string BenchmarkReport::to_csv() const {
  std::string out =
      "categories,top1_accuracy,unknown_recall,base_accuracy_exact,update_duration_ms,index_size\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.3f,%zu\n", r.categories, r.top1_accuracy,
                  r.unknown_recall, r.base_accuracy_exact, r.update_duration_ms, r.index_size);
    out += buf;
  }
  return out;
}

namespace {

std::string bench_sku(std::size_t cls) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sku-%05zu", cls);
  return buf;
}

SkuRegistration bench_registration(const LabelOracleEmbedder& oracle, std::size_t cls,
                                   std::size_t n_refs) {
  SkuRegistration reg;
  reg.sku_id = bench_sku(cls);
  reg.name = "Product " + std::to_string(cls);
  reg.price_cents = 100 + (cls * 37) % 900;
  reg.category = "bench";
  for (std::size_t r = 0; r < n_refs; ++r) {
    reg.references.push_back(oracle.sample(static_cast<std::uint32_t>(cls), r));
  }
  return reg;
}

}  // namespace

BenchmarkReport incremental_benchmark(const BenchmarkConfig& config) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  const LabelOracleEmbedder oracle(config.seed, config.epsilon, config.dim);
  const ClassifyParams params{config.tau, config.k};
  const std::size_t total_known = config.base_class_count + config.batch_size * config.batch_count;

  const auto query = [&](std::size_t cls, std::size_t q) {
    return oracle.sample(static_cast<std::uint32_t>(cls), config.references_per_class + q);
  };
  std::vector<Embedding> unknown_queries;
  for (std::size_t u = 0; u < config.unknown_class_count; ++u) {
    for (std::size_t q = 0; q < config.queries_per_class; ++q) {
      unknown_queries.push_back(query(total_known + u, q));
    }
  }
  std::vector<std::pair<std::size_t, Embedding>> known_queries;
  for (std::size_t cls = 0; cls < total_known; ++cls) {
    for (std::size_t q = 0; q < config.queries_per_class; ++q) {
      known_queries.emplace_back(cls, query(cls, q));
    }
  }
  const std::size_t base_query_count = config.base_class_count * config.queries_per_class;

  Registry registry(config.dim);
  BenchmarkReport report;
  report.config = config;
  std::vector<Decision> base_decisions;

  for (std::size_t stage = 0; stage <= config.batch_count; ++stage) {
    const std::size_t first = stage == 0 ? 0 : config.base_class_count + (stage - 1) * config.batch_size;
    const std::size_t last = config.base_class_count + stage * config.batch_size;
    std::vector<SkuRegistration> regs;
    for (std::size_t cls = first; cls < last; ++cls) {
      regs.push_back(bench_registration(oracle, cls, config.references_per_class));
    }
    const auto t0 = Clock::now();
    registry.register_batch(std::move(regs));
    BenchmarkRow row;
    row.update_duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    row.categories = last;
    row.index_size = registry.size();

    const auto n_known = static_cast<std::ptrdiff_t>(last * config.queries_per_class);
    std::vector<char> correct(static_cast<std::size_t>(n_known), 0);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n_known; ++i) {
      const auto& [cls, e] = known_queries[static_cast<std::size_t>(i)];
      const Decision d = registry.classify(e, params, config.mode);
      const auto* m = std::get_if<Match>(&d);
      correct[static_cast<std::size_t>(i)] = m && m->sku_id == bench_sku(cls);
    }
    row.top1_accuracy = static_cast<double>(std::count(correct.begin(), correct.end(), 1)) /
                        static_cast<double>(n_known);

    const auto n_unknown = static_cast<std::ptrdiff_t>(unknown_queries.size());
    std::vector<char> rejected(unknown_queries.size(), 0);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n_unknown; ++i) {
      rejected[static_cast<std::size_t>(i)] =
          !is_match(registry.classify(unknown_queries[static_cast<std::size_t>(i)], params,
                                      config.mode));
    }
    row.unknown_recall = static_cast<double>(std::count(rejected.begin(), rejected.end(), 1)) /
                         static_cast<double>(n_unknown);

    std::vector<Decision> exact(base_query_count);
    const auto n_base = static_cast<std::ptrdiff_t>(base_query_count);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n_base; ++i) {
      exact[static_cast<std::size_t>(i)] = registry.classify(
          known_queries[static_cast<std::size_t>(i)].second, params, SearchMode::Exact);
    }
    std::size_t base_correct = 0;
    for (std::size_t i = 0; i < base_query_count; ++i) {
      const auto* m = std::get_if<Match>(&exact[i]);
      base_correct += m && m->sku_id == bench_sku(known_queries[i].first);
    }
    row.base_accuracy_exact =
        static_cast<double>(base_correct) / static_cast<double>(base_query_count);
    if (stage == 0) {
      base_decisions = std::move(exact);
    } else if (exact != base_decisions) {
      report.base_decisions_unchanged = false;
    }
    report.rows.push_back(row);
  }
  return report;
}

// ------------------------------------------------------------------ tau sweep

double TauRow::precision() const {
  const std::size_t matches = correct_match + wrong_match;
  return matches == 0 ? 1.0 : static_cast<double>(correct_match) / static_cast<double>(matches);
}

double TauRow::recall() const {
  const std::size_t known = correct_match + wrong_match + false_unknown;
  return known == 0 ? 1.0 : static_cast<double>(correct_match) / static_cast<double>(known);
}

std::vector<TauRow> tau_sweep(const Registry& registry, const std::vector<LabeledQuery>& queries,
                              const std::vector<double>& tau_grid, std::size_t k) {
  if (tau_grid.empty()) throw Error(ErrorCode::InvalidConfig, "tau grid must not be empty");
  for (double t : tau_grid) {
    if (!(t >= -1.0 && t <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tau must lie in [-1, 1]");
  }
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
  std::vector<std::optional<Match>> best(queries.size());
  std::vector<std::exception_ptr> failures(queries.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      best[i] = registry.nearest(queries[i].embedding, k, SearchMode::Exact);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<TauRow> rows;
  rows.reserve(tau_grid.size());
  for (double tau : tau_grid) {
    TauRow row;
    row.tau = tau;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const bool match = best[i] && best[i]->score >= tau;
      const auto& truth = queries[i].sku_id;
      if (match) {
        (truth && *truth == best[i]->sku_id) ? ++row.correct_match : ++row.wrong_match;
      } else {
        truth ? ++row.false_unknown : ++row.correct_unknown;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace zebrod
