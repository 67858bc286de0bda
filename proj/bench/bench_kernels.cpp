// Serial reference vs OpenMP for each kernel. Thread count follows
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "zebrod/geometry.hpp"
#include "zebrod/kernels.hpp"
#include "zebrod/synth.hpp"

using namespace zebrod;

namespace {

Image noise_image(int w, int h) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> byte(0, 255);
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = Rgb{static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                         static_cast<std::uint8_t>(byte(rng))};
    }
  }
  return img;
}

template <auto Kernel>
void BM_Rotate(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Image src = noise_image(side, side);
  Image dst(side, side);
  const auto sc = rotation_sincos(37.0);
  const kernels::RotateArgs args{sc.cos_t, sc.sin_t, kWhite};
  for (auto _ : state) {
    Kernel(src, dst, args);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}

template <auto Kernel>
void BM_Resize(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Image src = noise_image(side, side);
  Image dst(kDefaultPatchSize, kDefaultPatchSize);
  const kernels::ResizeArgs args{0, 0, side, side, 0, 0, kDefaultPatchSize, kDefaultPatchSize};
  for (auto _ : state) {
    Kernel(src, dst, args);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * kDefaultPatchSize * kDefaultPatchSize);
}

template <auto Kernel>
void BM_DotScores(benchmark::State& state) {
  const auto rows_n = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t kDim = kDefaultEmbeddingDim;
  const auto vecs = synth::random_unit_vectors(rows_n + 1, kDim, 9);
  std::vector<float> rows;
  rows.reserve(rows_n * kDim);
  for (std::size_t i = 1; i <= rows_n; ++i) {
    for (double v : vecs[i].values()) rows.push_back(static_cast<float>(v));
  }
  const std::vector<double> query(vecs[0].values().begin(), vecs[0].values().end());
  std::vector<double> out(rows_n);
  for (auto _ : state) {
    Kernel(query, rows, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows_n));
}

}  // namespace

BENCHMARK(BM_Rotate<kernels::serial::rotate_image>)->Name("rotate/serial")->Arg(640)->Arg(1920);
BENCHMARK(BM_Rotate<kernels::omp::rotate_image>)->Name("rotate/omp")->Arg(640)->Arg(1920);
BENCHMARK(BM_Resize<kernels::serial::resize_bilinear>)->Name("resize/serial")->Arg(480)->Arg(1080);
BENCHMARK(BM_Resize<kernels::omp::resize_bilinear>)->Name("resize/omp")->Arg(480)->Arg(1080);
BENCHMARK(BM_DotScores<kernels::serial::dot_scores>)->Name("dot_scores/serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_DotScores<kernels::omp::dot_scores>)->Name("dot_scores/omp")->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
