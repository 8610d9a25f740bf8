// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include <vector>

#include "g2cl/eval.hpp"
#include "g2cl/geo.hpp"
#include "g2cl/kernels.hpp"
#include "g2cl/random.hpp"

using namespace g2cl;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// First block of the toy encoder on a batch of 64 images at 32 px.
kernels::ConvShape first_block() {
  kernels::ConvShape s;
  s.batch = 64;
  s.in_channels = 3;
  s.in_height = s.in_width = 32;
  s.out_channels = 16;
  s.stride = 2;
  s.pad = 1;
  return s;
}

template <bool Parallel>
void conv_forward(benchmark::State& state) {
  const auto s = first_block();
  const auto in = noise(s.input_size(), 1), w = noise(s.weight_size(), 2), b = noise(16, 3);
  std::vector<float> out(s.output_size());
  for (auto _ : state) {
    if constexpr (Parallel) kernels::conv2d_forward<float>(s, in, w, b, out);
    else kernels::reference::conv2d_forward<float>(s, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void conv_backward(benchmark::State& state) {
  const auto s = first_block();
  const auto in = noise(s.input_size(), 1), w = noise(s.weight_size(), 2);
  const auto go = noise(s.output_size(), 4);
  std::vector<float> gi(s.input_size()), gw(s.weight_size()), gb(16);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::conv2d_backward<float>(s, in, w, go, gi, gw, gb);
    else kernels::reference::conv2d_backward<float>(s, in, w, go, gi, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void pairwise(benchmark::State& state) {
  const int n = 300, m = 600, d = 64;
  const auto a = noise(static_cast<std::size_t>(n) * d, 5), b = noise(static_cast<std::size_t>(m) * d, 6);
  std::vector<float> out(static_cast<std::size_t>(n) * m);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::pairwise_sq_distances<float>(a, b, n, m, d, out);
    else kernels::reference::pairwise_sq_distances<float>(a, b, n, m, d, out);
    benchmark::DoNotOptimize(out.data());
  }
}

std::vector<geo::Location> grid_locations(int side) {
  std::vector<geo::Location> locs;
  const geo::GeoPoint origin{30.0, 120.0};
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      locs.push_back({"L" + std::to_string(r * side + c), geo::offset_meters(origin, 20.0 * c, 20.0 * r)});
  return locs;
}

template <bool Parallel>
void neighbor_index(benchmark::State& state) {
  const auto locs = grid_locations(30);
  for (auto _ : state) {
    auto idx = Parallel ? geo::build_neighbor_index(locs, 8) : geo::build_neighbor_index_serial(locs, 8);
    benchmark::DoNotOptimize(idx);
  }
}

eval::FeatureStore random_store(std::size_t n, std::uint64_t seed) {
  eval::FeatureStore s;
  s.matrix = MatrixF::Zero(static_cast<Eigen::Index>(n), 64);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    s.ids.push_back("r" + std::to_string(i));
    s.meta.push_back({"L" + std::to_string(i % 100), geo::GeoPoint{30.0 + 1e-4 * (i % 100), 120.0},
                      dataset::Platform::satellite});
    for (int j = 0; j < 64; ++j) s.matrix(static_cast<Eigen::Index>(i), j) = static_cast<float>(rng.normal());
  }
  return s;
}

template <bool Parallel>
void ranking(benchmark::State& state) {
  const auto q = random_store(300, 7), g = random_store(600, 8);
  for (auto _ : state) {
    auto r = Parallel ? eval::rank_all(q, g) : eval::rank_all_serial(q, g);
    benchmark::DoNotOptimize(r);
  }
}

}  // namespace

BENCHMARK(conv_forward<true>)->Name("conv_forward/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(conv_forward<false>)->Name("conv_forward/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<true>)->Name("conv_backward/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<false>)->Name("conv_backward/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(pairwise<true>)->Name("pairwise_sq_distances/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(pairwise<false>)->Name("pairwise_sq_distances/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(neighbor_index<true>)->Name("neighbor_index/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(neighbor_index<false>)->Name("neighbor_index/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(ranking<true>)->Name("rank_all/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(ranking<false>)->Name("rank_all/serial")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
