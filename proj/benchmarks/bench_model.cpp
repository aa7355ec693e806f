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

#include "pgtk/model.hpp"
#include "pgtk/rng.hpp"

namespace {

using namespace pgtk;
using namespace pgtk::model;

Tensor<float> random_tensor(std::vector<int> shape, Rng& rng, float lo = 0.0f,
                            float hi = 1.0f) {
  Tensor<float> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(lo, hi));
  return t;
}

// Full production page (393x278 -> padded 400x288), default widths.
void BM_UnetForward(benchmark::State& state) {
  const int h = int(state.range(0)), w = int(state.range(1));
  Model<float> m = build_model<float>(ModelConfig{});
  init_params(m, 1);
  Rng rng(2);
  const Tensor<float> page = random_tensor({1, h, w}, rng);
  const Tensor<float> z = random_tensor({128}, rng, -1.0f, 1.0f);
  for (auto _ : state) {
    Tensor<float> y = predict_page(m, page, z);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_UnetForward)->Args({393, 278})->Args({192, 256})->Args({128, 128})
    ->Unit(benchmark::kMillisecond);

void BM_UnetForwardBackward(benchmark::State& state) {
  const int h = int(state.range(0)), w = int(state.range(1));
  Model<float> m = build_model<float>(ModelConfig{});
  init_params(m, 1);
  Rng rng(2);
  const Tensor<float> page = pad_page(random_tensor({1, h, w}, rng), 16);
  const Tensor<float> z = random_tensor({128}, rng, -1.0f, 1.0f);
  for (auto _ : state) {
    Graph<float> g(&m.params);
    const int out = unet_forward(g, m, g.input(page), g.input(z, true), h, w);
    const int loss = g.sum(out);
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(g.size() - 1));
  }
}
BENCHMARK(BM_UnetForwardBackward)->Args({393, 278})->Args({192, 256})->Args({128, 128})
    ->Unit(benchmark::kMillisecond);

void BM_ContextEncoderForward(benchmark::State& state) {
  Model<float> m = build_model<float>(ModelConfig{});
  init_params(m, 1);
  Rng rng(2);
  const Tensor<float> window = random_tensor({1, 78, 40}, rng, -2.0f, 2.0f);
  for (auto _ : state) {
    Graph<float> g(&m.params);
    const int e = encoder_forward(g, m, g.input(window));
    benchmark::DoNotOptimize(g.value(e).data());
  }
}
BENCHMARK(BM_ContextEncoderForward)->Unit(benchmark::kMillisecond);

void BM_ContextEncoderForwardBackward(benchmark::State& state) {
  Model<float> m = build_model<float>(ModelConfig{});
  init_params(m, 1);
  Rng rng(2);
  const Tensor<float> window = random_tensor({1, 78, 40}, rng, -2.0f, 2.0f);
  for (auto _ : state) {
    Graph<float> g(&m.params);
    const int e = encoder_forward(g, m, g.input(window, true));
    g.backward(g.sum(e));
    benchmark::DoNotOptimize(g.grad(g.size() - 1));
  }
}
BENCHMARK(BM_ContextEncoderForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
