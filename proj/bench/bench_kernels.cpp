/*
 * Copyright 2026 The cfdebug Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Serial reference kernels against their OpenMP counterparts.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "cfdebug/kernels.hpp"

namespace {

namespace k = cfdebug::kernels;

std::vector<double> random_vector(std::size_t size, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(size);
  for (auto& x : v) x = dist(rng);
  return v;
}

k::ConvShape conv_shape(const benchmark::State& state) {
  return {static_cast<int>(state.range(0)), 16, 32, 8, 8};
}

template <auto Kernel>
void BM_ConvForward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto in = random_vector(s.input_size(), 1);
  const auto w = random_vector(s.weight_size(), 2);
  const auto b = random_vector(s.out_channels, 3);
  std::vector<double> out(s.output_size());
  for (auto _ : state) {
    Kernel(s, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * s.batch);
}

template <auto Kernel>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto gout = random_vector(s.output_size(), 1);
  const auto w = random_vector(s.weight_size(), 2);
  std::vector<double> gin(s.input_size());
  for (auto _ : state) {
    Kernel(s, gout, w, gin);
    benchmark::DoNotOptimize(gin.data());
  }
  state.SetItemsProcessed(state.iterations() * s.batch);
}

template <auto Kernel>
void BM_ConvBackwardParams(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto in = random_vector(s.input_size(), 1);
  const auto gout = random_vector(s.output_size(), 2);
  std::vector<double> gw(s.weight_size()), gb(s.out_channels);
  for (auto _ : state) {
    Kernel(s, in, gout, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  state.SetItemsProcessed(state.iterations() * s.batch);
}

template <auto Kernel>
void BM_ReluMaxPool(benchmark::State& state) {
  const k::MapShape s{static_cast<int>(state.range(0)), 16, 16, 16};
  const auto in = random_vector(s.size(), 1);
  std::vector<double> out(s.size() / 4);
  std::vector<long> idx(s.size() / 4);
  for (auto _ : state) {
    Kernel(s, in, out, idx);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * s.batch);
}

template <auto Kernel>
void BM_LinearForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0)), in_f = 32, out_f = 10;
  const auto x = random_vector(static_cast<std::size_t>(batch) * in_f, 1);
  const auto w = random_vector(static_cast<std::size_t>(in_f) * out_f, 2);
  const auto b = random_vector(out_f, 3);
  std::vector<double> y(static_cast<std::size_t>(batch) * out_f);
  for (auto _ : state) {
    Kernel(batch, in_f, out_f, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}

#define CFDEBUG_BENCH_PAIR(bm, name)                                                  \
  BENCHMARK(bm<k::serial::name>)->Name(#name "/serial")->RangeMultiplier(4)->Range(1, 64); \
  BENCHMARK(bm<k::omp::name>)->Name(#name "/omp")->RangeMultiplier(4)->Range(1, 64);

CFDEBUG_BENCH_PAIR(BM_ConvForward, conv3x3_forward)
CFDEBUG_BENCH_PAIR(BM_ConvBackwardInput, conv3x3_backward_input)
CFDEBUG_BENCH_PAIR(BM_ConvBackwardParams, conv3x3_backward_params)
CFDEBUG_BENCH_PAIR(BM_ReluMaxPool, relu_maxpool2x2_forward)
CFDEBUG_BENCH_PAIR(BM_LinearForward, linear_forward)

}  // namespace

BENCHMARK_MAIN();
