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

#include "partguide/prototypes.hpp"
#include "partguide/rng.hpp"

namespace {

using namespace partguide;

FeatureBlob random_features(std::size_t n, std::size_t dim) {
  Rng rng(9);
  FeatureBlob blob(dim);
  std::vector<float> row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = static_cast<float>(rng.normal());
    blob.add({"img" + std::to_string(i / 196), static_cast<int>(i % 196)}, row);
  }
  return blob;
}

void BM_KMeans(benchmark::State& state) {
  const auto blob = random_features(static_cast<std::size_t>(state.range(0)), 64);
  ClusterConfig cfg;
  cfg.k = 32;
  cfg.max_iterations = 10;
  for (auto _ : state) {
    auto protos = cluster_prototypes(blob, cfg);
    benchmark::DoNotOptimize(protos.data());
  }
}
BENCHMARK(BM_KMeans)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);

}  // namespace
