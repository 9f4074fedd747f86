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

#include "partguide/guidance.hpp"
#include "partguide/rng.hpp"

namespace {

using namespace partguide;

void BM_GroupRois(benchmark::State& state) {
  // Selected patches of a dense 50%-overlap grid, as seen at prediction time.
  const auto grid = build_grid("a", 448, 448, {14, 0.5});
  Rng rng(3);
  std::vector<Patch> selected;
  for (const auto& p : grid.patches) {
    if (rng.uniform() < static_cast<double>(state.range(0)) / 100.0) selected.push_back(p);
  }
  for (auto _ : state) {
    auto regions = group_rois(selected);
    benchmark::DoNotOptimize(regions.data());
  }
  state.counters["patches"] = static_cast<double>(selected.size());
}
BENCHMARK(BM_GroupRois)->Arg(5)->Arg(20)->Arg(60);

void BM_Guide(benchmark::State& state) {
  const auto grid = build_grid("a", 448, 448, {14, 0.5});
  Rng rng(4);
  std::vector<double> conf(grid.size());
  for (auto& c : conf) c = rng.uniform();
  for (auto _ : state) {
    auto regions = guide(grid, conf, Variant::kLGSAM, 0.8, "door");
    benchmark::DoNotOptimize(regions.data());
  }
}
BENCHMARK(BM_Guide);

}  // namespace
