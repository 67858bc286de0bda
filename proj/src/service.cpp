#include "zebrod/service.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

#include <openssl/evp.h>

#include "httplib.h"

#include "zebrod/geometry.hpp"
#include "zebrod/image.hpp"

namespace zebrod {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------------- config

void ApiConfig::validate() const {
  host_port();
  ClassifyParams{tau_default, k_default}.validate();
  if (threads < 1) throw Error(ErrorCode::InvalidConfig, "threads must be >= 1");
  switch (detector.mode) {
    case DetectorConfig::Mode::Fixture:
      if (detector.fixtures_dir.empty()) {
        throw Error(ErrorCode::InvalidConfig, "fixture detector needs fixtures_dir");
      }
      break;
    case DetectorConfig::Mode::Remote:
      HttpEndpoint::parse(detector.endpoint);
      break;
  }
  if (provider.dim == 0) throw Error(ErrorCode::InvalidConfig, "provider dim must be positive");
  if (provider.mode == ProviderConfig::Mode::External) HttpEndpoint::parse(provider.endpoint);
  if (provider.mode == ProviderConfig::Mode::LabelOracle && !(provider.epsilon >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "epsilon must be >= 0");
  }
  if (auth_token && auth_token->empty()) {
    throw Error(ErrorCode::InvalidConfig, "auth_token must not be empty");
  }
}

std::pair<std::string, int> ApiConfig::host_port() const {
  const auto colon = bind_addr.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw Error(ErrorCode::InvalidConfig, "bind_addr must be host:port, got '" + bind_addr + "'");
  }
  int port = -1;
  const std::string p = bind_addr.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
  if (ec != std::errc{} || ptr != p.data() + p.size() || port < 0 || port > 65535) {
    throw Error(ErrorCode::InvalidConfig, "bad port in bind_addr '" + bind_addr + "'");
  }
  return {bind_addr.substr(0, colon), port};
}

namespace {

std::chrono::milliseconds timeout_from(const json& j, std::chrono::milliseconds fallback) {
  const auto ms = j.value("timeout_ms", static_cast<std::int64_t>(fallback.count()));
  if (ms <= 0) throw Error(ErrorCode::InvalidConfig, "timeout_ms must be positive");
  return std::chrono::milliseconds(ms);
}

}  // namespace

ApiConfig ApiConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  ApiConfig c;
  try {
    c.bind_addr = j.value("bind_addr", c.bind_addr);
    c.tau_default = j.value("tau_default", c.tau_default);
    c.k_default = j.value("k_default", c.k_default);
    c.threads = j.value("threads", c.threads);
    c.snapshot_path = j.value("snapshot_path", std::string{});
    c.patch_dir = j.value("patch_dir", std::string{});
    const std::string search = j.value("search_mode", std::string("ann"));
    if (search == "ann") {
      c.search_mode = SearchMode::Ann;
    } else if (search == "exact") {
      c.search_mode = SearchMode::Exact;
    } else {
      throw Error(ErrorCode::InvalidConfig, "search_mode must be 'ann' or 'exact'");
    }
    if (j.contains("auth_token") && !j["auth_token"].is_null()) {
      c.auth_token = j["auth_token"].get<std::string>();
    }

    const json det = j.value("detector", json::object());
    const std::string dmode = det.value("mode", std::string("fixture"));
    if (dmode == "fixture") {
      c.detector.mode = DetectorConfig::Mode::Fixture;
    } else if (dmode == "remote") {
      c.detector.mode = DetectorConfig::Mode::Remote;
    } else {
      throw Error(ErrorCode::InvalidConfig, "detector.mode must be 'fixture' or 'remote'");
    }
    c.detector.fixtures_dir = det.value("fixtures_dir", std::string{});
    c.detector.endpoint = det.value("endpoint", std::string{});
    c.detector.timeout = timeout_from(det, c.detector.timeout);

    const json prov = j.value("provider", json::object());
    const std::string pmode = prov.value("mode", std::string("patch-hash"));
    if (pmode == "patch-hash") {
      c.provider.mode = ProviderConfig::Mode::PatchHash;
    } else if (pmode == "label-oracle") {
      c.provider.mode = ProviderConfig::Mode::LabelOracle;
    } else if (pmode == "external") {
      c.provider.mode = ProviderConfig::Mode::External;
    } else {
      throw Error(ErrorCode::InvalidConfig,
                  "provider.mode must be 'patch-hash', 'label-oracle' or 'external'");
    }
    c.provider.seed = prov.value("seed", c.provider.seed);
    c.provider.epsilon = prov.value("epsilon", c.provider.epsilon);
    c.provider.dim = prov.value("dim", c.provider.dim);
    c.provider.endpoint = prov.value("endpoint", std::string{});
    c.provider.timeout = timeout_from(prov, c.provider.timeout);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return c;
}

void ApiConfig::apply_env(const std::function<const char*(const char*)>& getenv_fn) {
  if (const char* v = getenv_fn("BIND_ADDR"); v && *v) bind_addr = v;
  if (const char* v = getenv_fn("TAU_DEFAULT"); v && *v) {
    char* end = nullptr;
    const double tau = std::strtod(v, &end);
    if (end == v || *end != '\0') {
      throw Error(ErrorCode::InvalidConfig, std::string("TAU_DEFAULT is not a number: ") + v);
    }
    tau_default = tau;
  }
  if (const char* v = getenv_fn("SNAPSHOT_PATH"); v && *v) snapshot_path = v;
  if (const char* v = getenv_fn("AUTH_TOKEN"); v && *v) auth_token = std::string(v);
}

ApiConfig ApiConfig::load(const std::optional<fs::path>& file,
                          const std::function<const char*(const char*)>& getenv_fn) {
  ApiConfig c;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + file->string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::InvalidConfig, file->string() + " is not JSON");
    c = from_json(doc);
  }
  c.apply_env(getenv_fn);
  c.validate();
  return c;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& c) {
  switch (c.mode) {
    case ProviderConfig::Mode::PatchHash:
      return std::make_unique<PatchHashEmbedder>(c.seed, c.dim);
    case ProviderConfig::Mode::LabelOracle:
      return std::make_unique<LabelOracleEmbedder>(c.seed, c.epsilon, c.dim);
    case ProviderConfig::Mode::External:
      return std::make_unique<RemoteEmbedder>(c.endpoint, c.dim, c.timeout);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown provider mode");
}

std::unique_ptr<Detector> make_detector(const DetectorConfig& c) {
  switch (c.mode) {
    case DetectorConfig::Mode::Fixture:
      return std::make_unique<FixtureDetector>(c.fixtures_dir);
    case DetectorConfig::Mode::Remote:
      return std::make_unique<RemoteDetector>(c.endpoint, c.timeout);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown detector mode");
}

// ------------------------------------------------------------------- errors

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Unauthorized:
      return 401;
    case ErrorCode::NotFound:
    case ErrorCode::UnknownSku:
    case ErrorCode::UnknownFlagId:
      return 404;
    case ErrorCode::DuplicateSku:
    case ErrorCode::FlagNotOpen:
      return 409;
    case ErrorCode::DetectorFailure:
    case ErrorCode::ProviderFailure:
    case ErrorCode::MissingAnnotation:
    case ErrorCode::Unreachable:
    case ErrorCode::MalformedResponse:
    case ErrorCode::Timeout:
      return 422;
    case ErrorCode::IoFailure:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::VersionMismatch:
      return 500;
    default:
      return 400;
  }
}

json error_body(ErrorCode code, const std::string& message, const json& details) {
  json j = {{"code", std::string(to_string(code))}, {"message", message}};
  if (!details.is_null()) j["details"] = details;
  return j;
}

json to_json(const SkuRecord& r, bool include_vector) {
  json j = {{"sku_id", r.sku_id},
            {"name", r.name},
            {"price_cents", r.price_cents},
            {"category", r.category},
            {"reference_count", r.reference_count},
            {"registered_at", format_timestamp(r.registered_at)}};
  if (include_vector) j["centroid"] = r.centroid.values();
  return j;
}

json to_json(const UnknownFlag& f) {
  json j = {{"flag_id", f.flag_id},
            {"status", std::string(to_string(f.status))},
            {"patch_ref", f.patch_ref},
            {"created_at", format_timestamp(f.created_at)},
            {"best_sku_id", nullptr},
            {"best_score", nullptr},
            {"resolved_sku_id", nullptr}};
  if (f.best_sku_id) j["best_sku_id"] = *f.best_sku_id;
  if (f.best_score) j["best_score"] = *f.best_score;
  if (f.resolved_sku_id) j["resolved_sku_id"] = *f.resolved_sku_id;
  return j;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.rfind("data:", 0) == 0) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw Error(ErrorCode::BadRequest, "bad data URL");
    text.remove_prefix(comma + 1);
  }
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  if (clean.size() % 4 == 1) throw Error(ErrorCode::BadRequest, "invalid base64 length");
  while (clean.size() % 4 != 0) clean.push_back('=');
  if (clean.empty()) return {};
  std::size_t pad = 0;
  while (pad < 2 && clean[clean.size() - 1 - pad] == '=') ++pad;
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) throw Error(ErrorCode::BadRequest, "invalid base64");
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// ------------------------------------------------------------------ service

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), error_body(code, message));
}

json parse_body(const httplib::Request& req) {
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::BadRequest, "request body is not valid JSON");
  return j;
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::BadRequest, std::string("missing field '") + key + "'");
  }
  return j[key];
}

std::string get_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw Error(ErrorCode::BadRequest, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t get_cents(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw Error(ErrorCode::BadRequest, std::string("'") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool query_flag(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return false;
  const auto v = req.get_param_value(key);
  return v == "true" || v == "1";
}

std::size_t query_count(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const auto v = req.get_param_value(key);
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(ErrorCode::BadRequest, std::string("'") + key + "' must be a non-negative integer");
  }
  return out;
}

bool safe_id(const std::string& id) {
  return !id.empty() && id.size() <= 200 && id.find('/') == std::string::npos &&
         id.find('\\') == std::string::npos && id != "." && id != "..";
}

}  // namespace

struct ApiService::Impl {
  httplib::Server server;
  std::string host;
  int port = 0;

  std::unique_ptr<EmbeddingProvider> provider;
  std::unique_ptr<Detector> detector;
  std::unique_ptr<PatchStore> patches;

  mutable std::mutex registry_mutex;
  std::shared_ptr<Registry> registry;

  std::shared_ptr<Registry> current() const {
    std::lock_guard lock(registry_mutex);
    return registry;
  }
  void replace(std::shared_ptr<Registry> r) {
    std::lock_guard lock(registry_mutex);
    registry = std::move(r);
  }
};

namespace {

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::BadRequest, e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "Internal"}, {"message", e.what()}});
    }
  };
}

Patch reference_patch(const std::string& b64, const std::string& sku_id, std::size_t i) {
  const auto bytes = base64_decode(b64);
  Image img;
  try {
    img = decode_image(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadRequest, "reference " + std::to_string(i) + ": " + e.what());
  }
  const PixelBox whole{0.0, 0.0, static_cast<double>(img.width()), static_cast<double>(img.height())};
  return crop_and_pad(img, whole, kDefaultPatchSize, kWhite,
                      "ref:" + sku_id + ":" + std::to_string(i));
}

SkuRegistration parse_registration(const json& body, const EmbeddingProvider& provider) {
  if (!body.is_object()) throw Error(ErrorCode::BadRequest, "SKU body must be an object");
  SkuRegistration reg;
  reg.sku_id = get_string(body, "sku_id");
  reg.name = get_string(body, "name");
  reg.price_cents = get_cents(body, "price_cents");
  reg.category = body.contains("category") ? get_string(body, "category") : std::string{};
  const auto& refs = require(body, "references");
  if (!refs.is_array()) throw Error(ErrorCode::BadRequest, "'references' must be an array");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = refs[i];
    if (r.is_string()) {
      try {
        reg.references.push_back(provider.embed(reference_patch(r.get<std::string>(), reg.sku_id, i)));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::BadRequest) throw;
        throw Error(ErrorCode::ProviderFailure, "reference " + std::to_string(i) + ": " + e.what());
      }
    } else if (r.is_array()) {
      std::vector<double> v;
      v.reserve(r.size());
      for (const auto& x : r) {
        if (!x.is_number()) throw Error(ErrorCode::BadRequest, "embedding values must be numbers");
        v.push_back(x.get<double>());
      }
      reg.references.emplace_back(std::move(v));
    } else {
      throw Error(ErrorCode::BadRequest,
                  "reference " + std::to_string(i) + " must be base64 image data or a number array");
    }
  }
  return reg;
}

std::optional<fs::path> find_fixture_image(const fs::path& dir, const std::string& id) {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".bmp"}) {
    const auto p = dir / (id + ext);
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

ApiService::ApiService(ApiConfig config) : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  config_.validate();
  auto& s = *impl_;
  s.provider = make_provider(config_.provider);
  s.detector = make_detector(config_.detector);
  if (config_.patch_dir.empty()) {
    s.patches = std::make_unique<MemoryPatchStore>();
  } else {
    s.patches = std::make_unique<DirectoryPatchStore>(config_.patch_dir);
  }
  if (!config_.snapshot_path.empty() && fs::exists(config_.snapshot_path)) {
    s.registry = std::make_shared<Registry>(Registry::load(config_.snapshot_path));
    if (s.registry->dim() != s.provider->dim()) {
      throw Error(ErrorCode::DimMismatch, "snapshot dim differs from provider dim");
    }
  } else {
    s.registry = std::make_shared<Registry>(s.provider->dim());
  }
  s.registry->set_tau_default(config_.tau_default);

  auto& srv = s.server;
  const int threads = config_.threads;
  srv.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  srv.set_payload_max_length(64u << 20);

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!config_.auth_token || req.method == "OPTIONS" || req.path == "/v1/healthz") {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    if (req.get_header_value("Authorization") != "Bearer " + *config_.auth_token) {
      send_error(res, ErrorCode::Unauthorized, "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  srv.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS");
  });
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send_error(res, ErrorCode::NotFound, "no route for " + req.method + " " + req.path);
    } else {
      send_json(res, res.status, {{"code", "HttpError"}, {"message", httplib::status_message(res.status)}});
    }
  });
  srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/v1/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
    auto reg = impl_->current();
    send_json(res, 200,
              {{"status", "ok"},
               {"version", std::string(kVersion)},
               {"catalog_size", reg->size()},
               {"open_flags", reg->list_flags(FlagStatus::Open).size()},
               {"dim", reg->dim()},
               {"tau_default", reg->tau_default()}});
  }));

  srv.Get("/v1/metrics", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, metrics_.to_json());
  }));

  srv.Post("/v1/checkout", guarded([this](const httplib::Request& req, httplib::Response& res) {
    CheckoutImage image;
    const std::string ctype = req.get_header_value("Content-Type");
    const auto load_fixture = [&](const std::string& id) {
      const auto path = safe_id(id) && !config_.detector.fixtures_dir.empty()
                            ? find_fixture_image(config_.detector.fixtures_dir, id)
                            : std::nullopt;
      if (!path) throw Error(ErrorCode::BadRequest, "unknown fixture '" + id + "'");
      image.image_id = id;
      image.pixels = load_image(*path);
    };
    const auto decode = [&](std::span<const std::uint8_t> bytes) {
      try {
        image.pixels = decode_image(bytes);
      } catch (const Error& e) {
        throw Error(ErrorCode::BadRequest, e.what());
      }
    };
    if (ctype.rfind("image/", 0) == 0) {
      image.image_id = req.has_param("image_id") ? req.get_param_value("image_id") : "upload";
      decode({reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()});
    } else {
      const json body = parse_body(req);
      if (body.is_object() && body.contains("fixture_id")) {
        load_fixture(get_string(body, "fixture_id"));
      } else if (body.is_object() && body.contains("image_base64")) {
        image.image_id = body.contains("image_id") ? get_string(body, "image_id") : "upload";
        decode(base64_decode(get_string(body, "image_base64")));
      } else {
        throw Error(ErrorCode::BadRequest, "expected an image body, {fixture_id} or {image_base64}");
      }
    }
    auto reg = impl_->current();
    CheckoutOptions opts;
    opts.classify = {reg->tau_default(), config_.k_default};
    opts.mode = config_.search_mode;
    opts.patch_store = impl_->patches.get();
    const Receipt receipt = process_checkout(image, *impl_->detector, *impl_->provider, *reg, opts);
    metrics_.record(receipt.timings);
    send_json(res, 200, to_json(receipt));
  }));

  srv.Get("/v1/skus", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto skus = impl_->current()->list_skus();
    const std::size_t offset = query_count(req, "offset", 0);
    const std::size_t limit = query_count(req, "limit", skus.size());
    const bool vec = query_flag(req, "include_vector");
    json out = json::array();
    for (std::size_t i = offset; i < skus.size() && i - offset < limit; ++i) {
      out.push_back(to_json(skus[i], vec));
    }
    send_json(res, 200, {{"skus", std::move(out)}, {"total", skus.size()}, {"offset", offset}});
  }));

  srv.Post("/v1/skus", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    auto rec = impl_->current()->register_sku(parse_registration(body, *impl_->provider));
    send_json(res, 201, to_json(rec, query_flag(req, "include_vector")));
  }));

  srv.Post(R"(/v1/skus:batch)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const json& items = body.is_array() ? body : require(body, "skus");
    if (!items.is_array()) throw Error(ErrorCode::BadRequest, "'skus' must be an array");
    std::vector<SkuRegistration> regs;
    for (const auto& item : items) regs.push_back(parse_registration(item, *impl_->provider));
    const auto recs = impl_->current()->register_batch(std::move(regs));
    json out = json::array();
    const bool vec = query_flag(req, "include_vector");
    for (const auto& r : recs) out.push_back(to_json(r, vec));
    send_json(res, 201, {{"skus", std::move(out)}});
  }));

  srv.Get(R"(/v1/skus/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, to_json(impl_->current()->get_sku(req.matches[1]), query_flag(req, "include_vector")));
  }));

  srv.Patch(R"(/v1/skus/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.is_object()) throw Error(ErrorCode::BadRequest, "body must be an object");
    for (const auto& [key, _] : body.items()) {
      if (key != "price_cents") {
        throw Error(ErrorCode::BadRequest, "field '" + key + "' is not mutable");
      }
    }
    send_json(res, 200,
              to_json(impl_->current()->update_price(req.matches[1], get_cents(body, "price_cents"))));
  }));

  srv.Delete(R"(/v1/skus/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    impl_->current()->remove_sku(req.matches[1]);
    res.status = 204;
  }));

  srv.Get("/v1/flags", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::optional<FlagStatus> status;
    if (req.has_param("status")) {
      try {
        status = parse_flag_status(req.get_param_value("status"));
      } catch (const Error& e) {
        throw Error(ErrorCode::BadRequest, e.what());
      }
    }
    json out = json::array();
    for (const auto& f : impl_->current()->list_flags(status)) out.push_back(to_json(f));
    send_json(res, 200, {{"flags", std::move(out)}});
  }));

  srv.Get(R"(/v1/flags/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto flag = impl_->current()->get_flag(req.matches[1]);
    json j = to_json(flag);
    j["patch_png_base64"] = nullptr;
    if (!flag.patch_ref.empty()) {
      if (auto png = impl_->patches->get_png(flag.patch_ref)) j["patch_png_base64"] = base64_encode(*png);
    }
    send_json(res, 200, j);
  }));

  srv.Get(R"(/v1/flags/([^/]+)/patch)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto flag = impl_->current()->get_flag(req.matches[1]);
    auto png = flag.patch_ref.empty() ? std::nullopt : impl_->patches->get_png(flag.patch_ref);
    if (!png) throw Error(ErrorCode::NotFound, "flag has no stored patch");
    res.status = 200;
    res.set_content(std::string(png->begin(), png->end()), "image/png");
  }));

  srv.Post(R"(/v1/flags/([^/]+)/resolve)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    auto reg = impl_->current();
    SkuRegistration details;
    details.sku_id = get_string(body, "sku_id");
    const bool exists = reg->contains(details.sku_id);
    if (!exists || body.contains("name")) details.name = get_string(body, "name");
    if (!exists || body.contains("price_cents")) details.price_cents = get_cents(body, "price_cents");
    if (body.contains("category")) details.category = get_string(body, "category");
    send_json(res, 200, to_json(reg->resolve_flag(req.matches[1], std::move(details))));
  }));

  srv.Post(R"(/v1/flags/([^/]+)/dismiss)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto reg = impl_->current();
    reg->dismiss_flag(req.matches[1]);
    send_json(res, 200, to_json(reg->get_flag(req.matches[1])));
  }));

  const auto snapshot_target = [this](const httplib::Request& req) {
    fs::path path = config_.snapshot_path;
    if (!req.body.empty()) {
      const json body = parse_body(req);
      if (body.is_object() && body.contains("path")) path = get_string(body, "path");
    }
    if (path.empty()) throw Error(ErrorCode::BadRequest, "no snapshot path configured or given");
    return path;
  };

  srv.Post("/v1/snapshot/save", guarded([this, snapshot_target](const httplib::Request& req, httplib::Response& res) {
    const auto path = snapshot_target(req);
    auto reg = impl_->current();
    reg->save(path);
    send_json(res, 200, {{"path", path.string()}, {"catalog_size", reg->size()}});
  }));

  srv.Post("/v1/snapshot/load", guarded([this, snapshot_target](const httplib::Request& req, httplib::Response& res) {
    const auto path = snapshot_target(req);
    auto loaded = std::make_shared<Registry>(Registry::load(path));
    if (loaded->dim() != impl_->provider->dim()) {
      throw Error(ErrorCode::DimMismatch, "snapshot dim differs from provider dim");
    }
    loaded->set_tau_default(impl_->current()->tau_default());
    impl_->replace(loaded);
    send_json(res, 200, {{"path", path.string()}, {"catalog_size", loaded->size()}});
  }));
}

ApiService::~ApiService() { stop(); }

int ApiService::bind() {
  auto [host, port] = config_.host_port();
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + config_.bind_addr);
  return impl_->port;
}

void ApiService::listen() { impl_->server.listen_after_bind(); }

void ApiService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void ApiService::wait_until_ready() const { impl_->server.wait_until_ready(); }

std::shared_ptr<Registry> ApiService::registry() const { return impl_->current(); }

}  // namespace zebrod
