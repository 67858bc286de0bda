#include "zebrod/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "httplib.h"

#include "zebrod/error.hpp"
#include "zebrod/labelio.hpp"

namespace zebrod {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool intersects_image(const PixelBox& b, int w, int h) {
  return b.x_max > 0.0 && b.y_max > 0.0 && b.x_min < w && b.y_min < h;
}

bool detector_code(ErrorCode c) {
  return c == ErrorCode::DetectorFailure || c == ErrorCode::MissingAnnotation ||
         c == ErrorCode::Unreachable || c == ErrorCode::MalformedResponse ||
         c == ErrorCode::Timeout;
}

bool provider_code(ErrorCode c) {
  return c == ErrorCode::ProviderFailure || c == ErrorCode::Unreachable ||
         c == ErrorCode::MalformedResponse || c == ErrorCode::Timeout;
}

std::string post_binary(const HttpEndpoint& ep, std::chrono::milliseconds timeout,
                        const std::vector<std::uint8_t>& body, const char* content_type) {
  httplib::Client cli(ep.base);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  const auto t0 = Clock::now();
  auto res = cli.Post(ep.path, reinterpret_cast<const char*>(body.data()), body.size(),
                      content_type);
  if (!res) {
    const auto err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           ((err == httplib::Error::Read || err == httplib::Error::Write) &&
                            Clock::now() - t0 >= timeout);
    if (timed_out) {
      throw Error(ErrorCode::Timeout, ep.base + ep.path + " timed out");
    }
    if (err == httplib::Error::Connection) {
      throw Error(ErrorCode::Unreachable, ep.base + ep.path + ": " + httplib::to_string(err));
    }
    throw Error(ErrorCode::MalformedResponse, ep.base + ep.path + ": " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::MalformedResponse,
                ep.base + ep.path + " returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

std::string hex(const unsigned char* p, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[p[i] >> 4];
    out[2 * i + 1] = kDigits[p[i] & 0xF];
  }
  return out;
}

bool valid_ref(const std::string& ref) {
  if (ref.size() != 68 || ref.substr(64) != ".png") return false;
  return std::all_of(ref.begin(), ref.begin() + 64,
                     [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

}  // namespace

// ---------------------------------------------------------------- detectors

FixtureDetector::FixtureDetector(std::filesystem::path annotation_dir)
    : dir_(std::move(annotation_dir)) {}

FixtureDetector::FixtureDetector(std::map<std::string, std::vector<NormalizedBox>> annotations)
    : annotations_(std::move(annotations)) {}

std::vector<Detection> FixtureDetector::detect(const CheckoutImage& image) const {
  std::vector<NormalizedBox> boxes;
  if (auto it = annotations_.find(image.image_id); it != annotations_.end()) {
    boxes = it->second;
  } else {
    const auto path = dir_ / (image.image_id + ".txt");
    if (dir_.empty() || !std::filesystem::is_regular_file(path)) {
      throw Error(ErrorCode::MissingAnnotation, "no annotation for image '" + image.image_id + "'");
    }
    boxes = read_annotation_file(path).boxes;
  }
  std::vector<Detection> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    out.push_back({to_pixels(b, image.pixels.width(), image.pixels.height()), 1.0});
  }
  return out;
}

HttpEndpoint HttpEndpoint::parse(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0 || url.size() == kScheme.size()) {
    throw Error(ErrorCode::InvalidConfig, "endpoint must be an http:// URL: '" + url + "'");
  }
  const auto slash = url.find('/', kScheme.size());
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

RemoteDetector::RemoteDetector(const std::string& url, std::chrono::milliseconds timeout)
    : endpoint_(HttpEndpoint::parse(url)), timeout_(timeout) {
  if (timeout_.count() <= 0) throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
}

std::vector<Detection> RemoteDetector::detect(const CheckoutImage& image) const {
  const auto body = post_binary(endpoint_, timeout_, encode_png(image.pixels), "image/png");
  return parse_response(body, image.pixels.width(), image.pixels.height());
}

std::vector<Detection> RemoteDetector::parse_response(const std::string& body, int img_w,
                                                      int img_h) {
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw Error(ErrorCode::MalformedResponse, "detector response is not a JSON array");
  }
  std::vector<Detection> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& o = doc[i];
    const auto field = [&](const char* key) {
      if (!o.is_object() || !o.contains(key) || !o[key].is_number()) {
        throw Error(ErrorCode::MalformedResponse,
                    "detection " + std::to_string(i) + ": missing numeric '" + key + "'");
      }
      return o[key].get<double>();
    };
    Detection d{{field("x_min"), field("y_min"), field("x_max"), field("y_max")},
                field("confidence")};
    if (!is_valid(d.box) || !(d.box.width() > 0.0) || !(d.box.height() > 0.0)) {
      throw Error(ErrorCode::MalformedResponse, "detection " + std::to_string(i) + ": degenerate box");
    }
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      throw Error(ErrorCode::MalformedResponse,
                  "detection " + std::to_string(i) + ": confidence outside [0,1]");
    }
    if (!intersects_image(d.box, img_w, img_h)) {
      throw Error(ErrorCode::MalformedResponse,
                  "detection " + std::to_string(i) + ": box outside the image");
    }
    out.push_back(d);
  }
  return out;
}

RemoteEmbedder::RemoteEmbedder(const std::string& url, std::size_t dim,
                               std::chrono::milliseconds timeout)
    : endpoint_(HttpEndpoint::parse(url)), dim_(dim), timeout_(timeout) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidConfig, "embedding dim must be positive");
  if (timeout_.count() <= 0) throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
}

Embedding RemoteEmbedder::embed(const Patch& patch) const {
  const auto body = post_binary(endpoint_, timeout_, encode_png(patch.pixels), "image/png");
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_array() || doc.size() != dim_) {
    throw Error(ErrorCode::MalformedResponse,
                "embedder response must be a JSON array of " + std::to_string(dim_) + " numbers");
  }
  std::vector<double> v;
  v.reserve(dim_);
  for (const auto& x : doc) {
    if (!x.is_number()) throw Error(ErrorCode::MalformedResponse, "non-numeric embedding value");
    v.push_back(x.get<double>());
  }
  try {
    return normalize(Embedding(std::move(v)));
  } catch (const Error& e) {
    throw Error(ErrorCode::ProviderFailure, std::string("embedder returned ") + e.what());
  }
}

// ------------------------------------------------------------- patch store

std::string patch_content_hash(const Patch& patch) {
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(patch.width()),
                                 static_cast<std::uint32_t>(patch.height())};
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const auto bytes = patch.pixels.bytes();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, dims, sizeof(dims)) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error(ErrorCode::IoFailure, "sha256 failed");
  return hex(digest, len) + ".png";
}

std::string MemoryPatchStore::put(const Patch& patch) {
  auto ref = patch_content_hash(patch);
  auto png = encode_png(patch.pixels);
  std::lock_guard lock(mutex_);
  pngs_.try_emplace(ref, std::move(png));
  return ref;
}

std::optional<std::vector<std::uint8_t>> MemoryPatchStore::get_png(const std::string& ref) const {
  std::lock_guard lock(mutex_);
  auto it = pngs_.find(ref);
  if (it == pngs_.end()) return std::nullopt;
  return it->second;
}

DirectoryPatchStore::DirectoryPatchStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir_.string() + ": " + ec.message());
}

std::string DirectoryPatchStore::put(const Patch& patch) {
  auto ref = patch_content_hash(patch);
  const auto path = dir_ / ref;
  if (std::filesystem::exists(path)) return ref;
  const auto png = encode_png(patch.pixels);
  // Unique temp name per writer; the rename makes concurrent puts of the same crop safe.
  std::ostringstream tmp_name;
  tmp_name << ref << ".tmp." << std::this_thread::get_id();
  const auto tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(reinterpret_cast<const char*>(png.data()),
                           static_cast<std::streamsize>(png.size()))) {
      throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot store " + path.string() + ": " + ec.message());
  return ref;
}

std::optional<std::vector<std::uint8_t>> DirectoryPatchStore::get_png(const std::string& ref) const {
  if (!valid_ref(ref)) return std::nullopt;
  std::ifstream in(dir_ / ref, std::ios::binary);
  if (!in) return std::nullopt;
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

// ---------------------------------------------------------------- checkout

Receipt process_checkout(const CheckoutImage& image, const Detector& detector,
                         const EmbeddingProvider& provider, Registry& registry,
                         const CheckoutOptions& options) {
  const auto t_start = Clock::now();
  if (image.pixels.empty()) throw Error(ErrorCode::BadRequest, "empty image");
  if (provider.dim() != registry.dim()) {
    throw Error(ErrorCode::DimMismatch, "provider dim " + std::to_string(provider.dim()) +
                                            " != catalog dim " + std::to_string(registry.dim()));
  }
  options.classify.validate();

  Receipt receipt;
  receipt.image_id = image.image_id;
  const int img_w = image.pixels.width();
  const int img_h = image.pixels.height();

  auto t0 = Clock::now();
  std::vector<Detection> detections;
  try {
    detections = detector.detect(image);
  } catch (const Error& e) {
    if (detector_code(e.code())) throw;
    throw Error(ErrorCode::DetectorFailure, e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::DetectorFailure, e.what());
  }
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    if (!is_valid(d.box) || !(d.box.width() > 0.0) || !(d.box.height() > 0.0) ||
        !intersects_image(d.box, img_w, img_h) ||
        !(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      throw Error(ErrorCode::DetectorFailure, "detection " + std::to_string(i) + " is invalid");
    }
  }
  receipt.timings.detect_ms = ms_since(t0);

  const auto n = static_cast<std::ptrdiff_t>(detections.size());
  std::vector<std::exception_ptr> failures(detections.size());
  const auto rethrow_first = [&] {
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  };

  t0 = Clock::now();
  std::vector<Patch> patches(detections.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      patches[i] = crop_and_pad(image.pixels, detections[i].box, options.patch_size, options.pad,
                                image.image_id);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  rethrow_first();
  receipt.timings.crop_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<Embedding> embeddings(detections.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      Embedding e = provider.embed(patches[i]);
      if (e.dim() != registry.dim()) {
        throw Error(ErrorCode::ProviderFailure, "provider returned dim " + std::to_string(e.dim()));
      }
      embeddings[i] = std::move(e);
    } catch (const Error& e) {
      failures[i] = provider_code(e.code())
                        ? std::current_exception()
                        : std::make_exception_ptr(Error(ErrorCode::ProviderFailure, e.what()));
    } catch (const std::exception& e) {
      failures[i] = std::make_exception_ptr(Error(ErrorCode::ProviderFailure, e.what()));
    }
  }
  rethrow_first();
  receipt.timings.embed_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<Decision> decisions(detections.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      decisions[i] = registry.classify(embeddings[i], options.classify, options.mode);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  rethrow_first();
  receipt.timings.search_ms = ms_since(t0);

  std::vector<FlagRequest> requests;
  std::vector<std::size_t> unknown_items;
  receipt.items.reserve(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    LineItem item{detections[i].box, detections[i].confidence, decisions[i], std::nullopt};
    if (const auto* m = std::get_if<Match>(&item.decision)) {
      receipt.subtotal_cents += static_cast<std::int64_t>(m->price_cents);
    } else {
      std::string ref = options.patch_store ? options.patch_store->put(patches[i]) : std::string{};
      requests.push_back({embeddings[i], std::move(ref), std::get<Unknown>(item.decision)});
      unknown_items.push_back(i);
    }
    receipt.items.push_back(std::move(item));
  }
  if (!requests.empty()) {
    receipt.flag_ids = registry.create_flags(std::move(requests));
    for (std::size_t j = 0; j < unknown_items.size(); ++j) {
      receipt.items[unknown_items[j]].flag_id = receipt.flag_ids[j];
    }
  }
  receipt.unknown_count = unknown_items.size();
  receipt.timings.total_ms = ms_since(t_start);
  return receipt;
}

// --------------------------------------------------------------------- json

nlohmann::json to_json(const Decision& d) {
  if (const auto* m = std::get_if<Match>(&d)) {
    return {{"kind", "match"},
            {"sku_id", m->sku_id},
            {"name", m->name},
            {"price_cents", m->price_cents},
            {"score", m->score}};
  }
  const auto& u = std::get<Unknown>(d);
  nlohmann::json j = {{"kind", "unknown"}, {"best_sku_id", nullptr}, {"best_score", nullptr}};
  if (u.best_sku_id) j["best_sku_id"] = *u.best_sku_id;
  if (u.best_score) j["best_score"] = *u.best_score;
  return j;
}

nlohmann::json to_json(const Receipt& r, bool include_timings) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : r.items) {
    nlohmann::json j = {
        {"box",
         {{"x_min", it.box.x_min}, {"y_min", it.box.y_min}, {"x_max", it.box.x_max},
          {"y_max", it.box.y_max}}},
        {"detector_confidence", it.detector_confidence},
        {"decision", to_json(it.decision)},
        {"flag_id", nullptr}};
    if (it.flag_id) j["flag_id"] = *it.flag_id;
    items.push_back(std::move(j));
  }
  nlohmann::json j = {{"image_id", r.image_id},
                      {"items", std::move(items)},
                      {"subtotal_cents", r.subtotal_cents},
                      {"unknown_count", r.unknown_count},
                      {"flag_ids", r.flag_ids}};
  if (include_timings) {
    j["timings"] = {{"detect_ms", r.timings.detect_ms},
                    {"crop_ms", r.timings.crop_ms},
                    {"embed_ms", r.timings.embed_ms},
                    {"search_ms", r.timings.search_ms},
                    {"total_ms", r.timings.total_ms}};
  }
  return j;
}

// ----------------------------------------------------------------- metrics

void LatencyRecorder::record(const StageTimings& t) {
  const std::pair<const char*, double> values[] = {
      {"detect", t.detect_ms}, {"crop", t.crop_ms},   {"embed", t.embed_ms},
      {"search", t.search_ms}, {"total", t.total_ms}, {"overhead", t.overhead_ms()}};
  std::lock_guard lock(mutex_);
  ++total_;
  for (const auto& [name, v] : values) {
    auto& s = samples_[name];
    if (s.size() == kWindow) s.erase(s.begin());
    s.push_back(v);
  }
}

std::size_t LatencyRecorder::checkouts() const {
  std::lock_guard lock(mutex_);
  return total_;
}

std::map<std::string, LatencyRecorder::Summary> LatencyRecorder::summarize() const {
  std::map<std::string, std::vector<double>> copy;
  {
    std::lock_guard lock(mutex_);
    copy = samples_;
  }
  std::map<std::string, Summary> out;
  for (auto& [name, s] : copy) {
    Summary sum;
    sum.count = s.size();
    if (!s.empty()) {
      double acc = 0.0;
      for (double v : s) acc += v;
      sum.mean_ms = acc / static_cast<double>(s.size());
      std::sort(s.begin(), s.end());
      const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(s.size())));
      sum.p95_ms = s[std::max<std::size_t>(rank, 1) - 1];
    }
    out.emplace(name, sum);
  }
  return out;
}

nlohmann::json LatencyRecorder::to_json() const {
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [name, s] : summarize()) {
    stages[name] = {{"count", s.count}, {"mean_ms", s.mean_ms}, {"p95_ms", s.p95_ms}};
  }
  return {{"checkouts", checkouts()}, {"stages", std::move(stages)}};
}

}  // namespace zebrod
