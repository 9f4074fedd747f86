// Copyright 2026 The partguide Authors
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

#include "partguide/evaluation.hpp"
#include "partguide/mask.hpp"
#include "partguide/rng.hpp"

namespace {

using namespace partguide;

BinaryGrid blobs(int size, std::uint64_t seed) {
  Rng rng(seed);
  BinaryGrid g(size, size);
  for (int i = 0; i < 12; ++i) {
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
    g.fill({x, y, x + size / 8, y + size / 10});
  }
  return g;
}

void BM_EncodeRle(benchmark::State& state) {
  const auto g = blobs(static_cast<int>(state.range(0)), 5);
  for (auto _ : state) {
    auto runs = encode_rle(g);
    benchmark::DoNotOptimize(runs.data());
  }
  state.SetBytesProcessed(state.iterations() * g.size());
}
BENCHMARK(BM_EncodeRle)->Arg(256)->Arg(1024);

void BM_DecodeRle(benchmark::State& state) {
  const auto g = blobs(static_cast<int>(state.range(0)), 6);
  const auto runs = encode_rle(g);
  for (auto _ : state) {
    auto back = decode_rle(runs, g.width(), g.height());
    benchmark::DoNotOptimize(back.cells().data());
  }
  state.SetBytesProcessed(state.iterations() * g.size());
}
BENCHMARK(BM_DecodeRle)->Arg(256)->Arg(1024);

void BM_IouRuns(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto a = make_mask("a", "p", blobs(size, 7));
  const auto b = make_mask("a", "p", blobs(size, 8));
  for (auto _ : state) benchmark::DoNotOptimize(iou_counts(a, b));
}
BENCHMARK(BM_IouRuns)->Arg(256)->Arg(1024);

void BM_IouPixels(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto a = blobs(size, 7), b = blobs(size, 8);
  for (auto _ : state) benchmark::DoNotOptimize(iou_counts(a, b));
}
BENCHMARK(BM_IouPixels)->Arg(256)->Arg(1024);

}  // namespace
