#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "zebrod/augment.hpp"
#include "zebrod/error.hpp"
#include "zebrod/evalkit.hpp"
#include "zebrod/service.hpp"
#include "zebrod/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zebrod;

namespace {

std::vector<double> parse_angles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw Error(ErrorCode::InvalidConfig, "bad angle '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  }
}

int run_serve(const std::optional<fs::path>& config_file) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ApiService service(ApiConfig::load(config_file, [](const char* k) { return std::getenv(k); }));
  const int port = service.bind();
  std::cerr << "zebrod " << kVersion << " listening on " << service.config().host_port().first
            << ":" << port << "\n";
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
  });
  service.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-retraining retail product recognition toolkit"};
  app.require_subcommand(1);

  auto* augment = app.add_subcommand("augment", "Generate the rotated dataset");
  std::string in_dir, out_dir, angles_csv, fill_hex = "ffffff";
  double step = 10.0, tightness = 0.9;
  bool no_originals = false;
  augment->add_option("--input", in_dir, "Directory of images + annotations")->required();
  augment->add_option("--output", out_dir, "Output directory")->required();
  auto* step_opt = augment->add_option("--step", step, "Angle step in degrees");
  augment->add_option("--angles", angles_csv, "Comma-separated angles")->excludes(step_opt);
  augment->add_option("--tightness", tightness, "Tightness factor t in (0,1]");
  augment->add_option("--fill", fill_hex, "Fill colour as rrggbb");
  augment->add_flag("--no-originals", no_originals, "Do not copy the unrotated originals");

  auto* verify = app.add_subcommand("verify", "Check a dataset directory for defects");
  std::string verify_dir;
  verify->add_option("DIR", verify_dir)->required();

  auto* eval = app.add_subcommand("eval", "Evaluation tools");
  eval->require_subcommand(1);
  auto* map50 = eval->add_subcommand("map50", "mAP@50 over annotation directories");
  std::string gt_dir, pred_dir;
  double iou_thr = 0.5;
  map50->add_option("--gt", gt_dir)->required();
  map50->add_option("--pred", pred_dir)->required();
  map50->add_option("--iou", iou_thr);
  auto* bench = eval->add_subcommand("bench", "Incremental-batch benchmark");
  std::string bench_config, bench_out;
  bench->add_option("--config", bench_config, "JSON config (defaults when omitted)");
  bench->add_option("--out", bench_out, "Report JSON path; CSV goes next to it")->required();

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::string serve_config;
  serve->add_option("--config", serve_config, "JSON config file");

  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic fixtures");
  std::string synth_out, synth_classes;
  std::string synth_id = "fixture";
  std::size_t synth_products = 0;
  int synth_size = 64;
  std::uint64_t synth_seed = 1;
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--checkout", synth_classes, "Comma-separated oracle classes for one checkout image");
  synth_cmd->add_option("--id", synth_id, "Checkout image id");
  synth_cmd->add_option("--products", synth_products, "Number of single-product images");
  synth_cmd->add_option("--size", synth_size, "Product image side in pixels");
  synth_cmd->add_option("--seed", synth_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (augment->parsed()) {
      AugmentConfig cfg;
      cfg.input_dir = in_dir;
      cfg.output_dir = out_dir;
      cfg.angles = angles_csv.empty() ? default_angles(step) : parse_angles(angles_csv);
      cfg.tightness = tightness;
      cfg.fill = parse_rgb_hex(fill_hex);
      cfg.keep_originals = !no_originals;
      const auto report = generate_rotated_dataset(cfg);
      std::cout << report.to_json().dump(2) << "\n";
      return 0;
    }
    if (verify->parsed()) {
      const auto report = verify_dataset(verify_dir);
      std::cout << report.to_json().dump(2) << "\n";
      return report.ok() ? 0 : 1;
    }
    if (map50->parsed()) {
      std::cout << to_json(evaluate_map_dirs(gt_dir, pred_dir, iou_thr)).dump(2) << "\n";
      return 0;
    }
    if (bench->parsed()) {
      BenchmarkConfig cfg;
      if (!bench_config.empty()) {
        std::ifstream in(bench_config);
        if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + bench_config);
        json doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw Error(ErrorCode::InvalidConfig, bench_config + " is not JSON");
        cfg = BenchmarkConfig::from_json(doc);
      }
      const auto report = incremental_benchmark(cfg);
      write_text(bench_out, report.to_json().dump(2) + "\n");
      fs::path csv = bench_out;
      csv.replace_extension(".csv");
      write_text(csv, report.to_csv());
      std::cout << report.to_csv();
      return 0;
    }
    if (serve->parsed()) {
      return run_serve(serve_config.empty() ? std::nullopt : std::optional<fs::path>(serve_config));
    }
    if (synth_cmd->parsed()) {
      if (!synth_classes.empty()) {
        std::vector<std::uint32_t> classes;
        for (double c : parse_angles(synth_classes)) classes.push_back(static_cast<std::uint32_t>(c));
        synth::write_fixture(synth_out, synth::checkout_scene(synth_id, classes, 640, 480, synth_seed));
      }
      if (synth_products > 0) {
        synth::write_product_dataset(synth_out, synth_products, synth_size, synth_size, synth_seed);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
