// Copyright 2026 The pagetracker Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "pgtk/graph.hpp"
#include "pgtk/rng.hpp"

namespace {

using pgtk::Graph;
using pgtk::Rng;
using pgtk::Tensor;

Tensor<float> random_tensor(std::vector<int> shape, Rng& rng, float scale = 0.1f) {
  Tensor<float> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.gaussian()) * scale;
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int c = int(state.range(0));
  const int h = int(state.range(1));
  const int w = int(state.range(2));
  Rng rng(1);
  Tensor<float> x = random_tensor({c, h, w}, rng);
  Tensor<float> k = random_tensor({c, c, 3, 3}, rng);
  Tensor<float> b = random_tensor({c}, rng);
  for (auto _ : state) {
    auto y = pgtk::ops::conv2d_fwd(x, k, &b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * 2 * c * c * 9 * h * w);
}
BENCHMARK(BM_Conv2dForward)
    ->Args({8, 192, 256})
    ->Args({64, 24, 32})
    ->Args({128, 12, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const int c = int(state.range(0));
  const int h = int(state.range(1));
  const int w = int(state.range(2));
  Rng rng(1);
  Tensor<float> x = random_tensor({c, h, w}, rng);
  Tensor<float> k = random_tensor({c, c, 3, 3}, rng);
  Tensor<float> gy = random_tensor({c, h, w}, rng);
  for (auto _ : state) {
    Tensor<float> gx({c, h, w}), gk({c, c, 3, 3}), gb({c});
    pgtk::ops::conv2d_bwd(x, k, gy, 1, 1, &gx, &gk, &gb);
    benchmark::DoNotOptimize(gx.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * 2 * 2 * c * c * 9 * h * w);
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 192, 256})->Args({64, 24, 32});

void BM_DenseForward(benchmark::State& state) {
  const int m = int(state.range(0));
  const int n = int(state.range(1));
  Rng rng(1);
  Tensor<float> x = random_tensor({n}, rng);
  Tensor<float> w = random_tensor({m, n}, rng);
  Tensor<float> b = random_tensor({m}, rng);
  for (auto _ : state) {
    auto y = pgtk::ops::dense_fwd(x, w, &b);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_DenseForward)->Args({512, 128})->Args({32, 768});

}  // namespace

BENCHMARK_MAIN();
