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

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "oracles/brute_force.hpp"
#include "partguide/error.hpp"
#include "partguide/guidance.hpp"
#include "partguide/rng.hpp"

namespace partguide {
namespace {

std::vector<Patch> random_boxes(Rng& rng, std::size_t n, int extent = 40) {
  std::vector<Patch> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(extent)));
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(extent)));
    const int w = 1 + static_cast<int>(rng.below(10)), h = 1 + static_cast<int>(rng.below(10));
    out.push_back({static_cast<int>(i), {x, y, x + w, y + h}});
  }
  return out;
}

/// Checks group_rois against the closure oracle: same partition, ROI corners
/// equal to min/max scans over the members.
void expect_matches_oracle(const std::vector<Patch>& patches) {
  std::vector<oracle::RawBox> raw;
  for (const auto& p : patches) raw.push_back({p.box.x0, p.box.y0, p.box.x1, p.box.y1});
  const auto comp = oracle::overlap_components(raw);
  const auto regions = group_rois(patches);
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < patches.size(); ++i) pos[patches[i].index] = i;
  std::set<int> seen;
  std::set<int> comps_seen;
  for (const auto& r : regions) {
    ASSERT_FALSE(r.member_patches.empty());
    const int c = comp[pos.at(r.member_patches.front())];
    EXPECT_TRUE(comps_seen.insert(c).second) << "component split across regions";
    Box scan{1 << 30, 1 << 30, -(1 << 30), -(1 << 30)};
    for (int m : r.member_patches) {
      EXPECT_TRUE(seen.insert(m).second) << "patch in two regions";
      EXPECT_EQ(comp[pos.at(m)], c);
      const auto& b = patches[pos.at(m)].box;
      scan = {std::min(scan.x0, b.x0), std::min(scan.y0, b.y0), std::max(scan.x1, b.x1), std::max(scan.y1, b.y1)};
    }
    EXPECT_EQ(r.roi, scan);
  }
  EXPECT_EQ(seen.size(), patches.size());
}

TEST(ThresholdPatches, StrictBoundary) {
  const std::vector<double> c{0.5, 0.51, 0.2, 1.0};
  EXPECT_EQ(threshold_patches(c, 0.5), (std::vector<int>{1, 3}));
  EXPECT_TRUE(threshold_patches(c, 1.0).empty());
  EXPECT_EQ(threshold_patches(c, 0.0).size(), 4u);
}

TEST(GroupRois, Examples) {
  EXPECT_TRUE(group_rois({}).empty());
  const std::vector<Patch> one{{3, {10, 10, 20, 20}}};
  const auto single = group_rois(one);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].roi, (Box{10, 10, 20, 20}));
  EXPECT_EQ(single[0].member_patches, std::vector<int>{3});

  const std::vector<Patch> disjoint{{0, {0, 0, 5, 5}}, {1, {20, 20, 25, 25}}};
  EXPECT_EQ(group_rois(disjoint).size(), 2u);

  // Corner and edge contact have zero area, so they do not connect.
  const std::vector<Patch> touching{{0, {0, 0, 5, 5}}, {1, {5, 5, 10, 10}}, {2, {5, 0, 10, 5}}};
  EXPECT_EQ(group_rois(touching).size(), 3u);
}

TEST(GroupRois, TwoOverlapChains) {
  // Chain A: 5 boxes stepping right. Chain B: 4 boxes stepping down.
  std::vector<Patch> patches;
  for (int i = 0; i < 5; ++i) patches.push_back({i, {i * 5, 0, i * 5 + 10, 10}});
  for (int i = 0; i < 4; ++i) patches.push_back({5 + i, {60, 30 + i * 5, 70, 40 + i * 5}});
  const auto regions = group_rois(patches);
  ASSERT_EQ(regions.size(), 2u);
  EXPECT_EQ(regions[0].roi, (Box{0, 0, 30, 10}));
  EXPECT_EQ(regions[1].roi, (Box{60, 30, 70, 55}));
  expect_matches_oracle(patches);
}

TEST(GroupRois, RandomSetsMatchClosureOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    expect_matches_oracle(random_boxes(rng, rng.below(17)));
  }
}

TEST(GroupRois, InvariantUnderInputOrder) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto patches = random_boxes(rng, 12);
    const auto a = group_rois(patches);
    rng.shuffle(std::span<Patch>(patches));
    const auto b = group_rois(patches);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].roi, b[i].roi);
      EXPECT_EQ(a[i].member_patches, b[i].member_patches);
    }
  }
}

TEST(GroupRois, RejectsEmptyBox) {
  const std::vector<Patch> bad{{0, {5, 5, 5, 9}}};
  EXPECT_THROW(group_rois(bad), Error);
}

TEST(InferPrompt, Examples) {
  const std::vector<Patch> patches{{0, {0, 0, 10, 10}}, {1, {5, 0, 15, 10}}};
  const std::vector<double> conf{0.9, 0.7};
  PromptedRegion single{{0, 0, 10, 10}, {}, {}, {0}, 0.0};
  EXPECT_EQ(*infer_prompt(single, patches, conf, PromptMode::kLikelihood).point, (Point{5, 5}));
  EXPECT_EQ(*infer_prompt(single, patches, conf, PromptMode::kCenter).point, (Point{5, 5}));

  PromptedRegion pair{{0, 0, 15, 10}, {}, {}, {0, 1}, 0.0};
  const auto lik = infer_prompt(pair, patches, conf, PromptMode::kLikelihood);
  EXPECT_EQ(*lik.point, (Point{5, 5}));
  EXPECT_DOUBLE_EQ(lik.peak_confidence, 0.9);
  EXPECT_EQ(*infer_prompt(pair, patches, conf, PromptMode::kCenter).point, (Point{7, 5}));

  const std::vector<double> tied{0.8, 0.8};
  PromptedRegion rev{{0, 0, 15, 10}, {}, {}, {1, 0}, 0.0};
  EXPECT_EQ(*infer_prompt(rev, patches, tied, PromptMode::kLikelihood).point, (Point{5, 5}));

  PromptedRegion missing{{0, 0, 15, 10}, {}, {}, {2}, 0.0};
  EXPECT_THROW(infer_prompt(missing, patches, conf, PromptMode::kLikelihood), Error);
  PromptedRegion empty{{0, 0, 15, 10}, {}, {}, {}, 0.0};
  EXPECT_THROW(infer_prompt(empty, patches, conf, PromptMode::kCenter), Error);
}

TEST(InferPrompt, RandomRegionsAgreeWithScan) {
  Rng rng(13);
  const auto grid = build_grid("a", 60, 60, {6, 0.5});
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> conf(grid.size());
    for (auto& c : conf) c = static_cast<double>(rng.below(20)) / 20.0;
    std::set<int> chosen;
    while (chosen.size() < 8) chosen.insert(static_cast<int>(rng.below(grid.size())));
    PromptedRegion r;
    r.member_patches.assign(chosen.begin(), chosen.end());
    r.roi = grid.patches[static_cast<std::size_t>(*chosen.begin())].box;
    for (int m : chosen) r.roi = bounding_union(r.roi, grid.patches[static_cast<std::size_t>(m)].box);
    int best = -1;
    for (int m : chosen) {
      if (best < 0 || conf[static_cast<std::size_t>(m)] > conf[static_cast<std::size_t>(best)]) best = m;
    }
    const auto lik = infer_prompt(r, grid.patches, conf, PromptMode::kLikelihood);
    EXPECT_EQ(*lik.point, grid.patches[static_cast<std::size_t>(best)].box.center());
    const auto cen = infer_prompt(r, grid.patches, conf, PromptMode::kCenter);
    EXPECT_EQ(*cen.point, (Point{(r.roi.x0 + r.roi.x1) / 2, (r.roi.y0 + r.roi.y1) / 2}));
    EXPECT_TRUE(r.roi.contains(*lik.point));
    EXPECT_TRUE(r.roi.contains(*cen.point));
  }
}

TEST(Guide, PromptsPerVariantAndInsideRoi) {
  Rng rng(14);
  const auto grid = build_grid("a", 80, 60, {8, 0.5});
  std::vector<double> conf(grid.size());
  for (auto& c : conf) c = rng.uniform();
  for (auto v : all_variants()) {
    const auto regions = guide(grid, conf, v, 0.7, "door");
    std::size_t members = 0;
    for (const auto& r : regions) {
      members += r.member_patches.size();
      if (v == Variant::kGGSAM || v == Variant::kPatchGGSAM) {
        EXPECT_EQ(r.text, std::optional<std::string>("door"));
        EXPECT_FALSE(r.point.has_value());
      } else if (v == Variant::kPatchNaive) {
        EXPECT_FALSE(r.point.has_value());
        EXPECT_FALSE(r.text.has_value());
      } else {
        ASSERT_TRUE(r.point.has_value());
        EXPECT_TRUE(r.roi.contains(*r.point));
        EXPECT_FALSE(r.text.has_value());
      }
      if (!groups_patches(v)) EXPECT_EQ(r.member_patches.size(), 1u);
    }
    EXPECT_EQ(members, threshold_patches(conf, 0.7).size());
  }
  EXPECT_THROW(guide(grid, std::vector<double>(3, 0.9), Variant::kLGSAM, 0.5, "door"), Error);
}

TEST(Guide, RaisingThresholdOnlyShrinksRegions) {
  Rng rng(15);
  const auto grid = build_grid("a", 70, 70, {7, 0.5});
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> conf(grid.size());
    for (auto& c : conf) c = rng.uniform();
    const double lo = rng.uniform(0.3, 0.8), hi = lo + rng.uniform(0.0, 0.2);
    const auto low = guide(grid, conf, Variant::kCGSAM, lo, "x");
    const auto high = guide(grid, conf, Variant::kCGSAM, hi, "x");
    for (const auto& r : high) {
      const bool contained = std::any_of(low.begin(), low.end(), [&](const PromptedRegion& l) {
        return std::includes(l.member_patches.begin(), l.member_patches.end(), r.member_patches.begin(),
                             r.member_patches.end());
      });
      EXPECT_TRUE(contained);
    }
  }
}

GuidanceModel peak_model() {
  // decision = 10 exp(-(x-1)^2) - 5: positive near x = 1, negative near 0.
  GuidanceModel m;
  m.part_class = "door";
  m.feature_dim = 1;
  m.gamma = 1.0;
  m.support_vectors = {1.0f};
  m.dual_coefficients = {10.0};
  m.bias = -5.0;
  m.platt_a = 1.0;
  m.platt_b = 0.0;
  return m;
}

TEST(RunGuidance, TwoBlobsAndEmptyField) {
  const auto grid = build_grid("a", 60, 60, {6, 0.5});
  FeatureBlob hot(1), cold(1);
  for (const auto& p : grid.patches) {
    const int col = p.index % grid.columns, row = p.index / grid.columns;
    const bool blob = (col <= 1 && row <= 1) || (col >= 8 && row >= 8);
    const float on[1] = {blob ? 1.0f : 0.0f}, off[1] = {0.0f};
    hot.add({"a", p.index}, on);
    cold.add({"a", p.index}, off);
  }
  const auto model = peak_model();
  EXPECT_TRUE(run_guidance(grid, cold, model, Variant::kLGSAM, 0.5).empty());

  const auto regions = run_guidance(grid, hot, model, Variant::kLGSAM, 0.5);
  ASSERT_EQ(regions.size(), 2u);
  std::vector<Patch> selected;
  for (const auto& r : regions) {
    for (int m : r.member_patches) selected.push_back(grid.patches[static_cast<std::size_t>(m)]);
  }
  expect_matches_oracle(selected);
  EXPECT_EQ(regions[0].member_patches.size(), 4u);

  const auto naive = run_guidance(grid, hot, model, Variant::kPatchNaive, 0.5);
  EXPECT_EQ(grid.columns, 11);
  EXPECT_EQ(naive.size(), 4u + 9u);
  GuidanceModel untrained;
  EXPECT_THROW(run_guidance(grid, hot, untrained, Variant::kLGSAM, 0.5), Error);
}

TEST(RunGuidance, SinglePatchLgsamAndNaiveShareGeometry) {
  const auto grid = build_grid("a", 40, 40, {4, 0.0});
  FeatureBlob f(1);
  for (const auto& p : grid.patches) {
    const float v[1] = {p.index == 5 ? 1.0f : 0.0f};
    f.add({"a", p.index}, v);
  }
  const auto l = run_guidance(grid, f, peak_model(), Variant::kLGSAM, 0.5);
  const auto n = run_guidance(grid, f, peak_model(), Variant::kPatchNaive, 0.5);
  ASSERT_EQ(l.size(), 1u);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(l[0].roi, n[0].roi);
  EXPECT_TRUE(l[0].point.has_value());
  EXPECT_FALSE(n[0].point.has_value());
}

TEST(Variants, ParseAndPrint) {
  for (auto v : all_variants()) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(parse_variant("LGSAM"), Variant::kLGSAM);
  EXPECT_EQ(parse_variant("Patch_CGSAM"), Variant::kPatchCGSAM);
  EXPECT_EQ(parse_variant("naive"), Variant::kPatchNaive);
  EXPECT_FALSE(parse_variant("sam").has_value());
  EXPECT_EQ(roi_variants().size(), 3u);
  EXPECT_TRUE(groups_patches(Variant::kGGSAM));
  EXPECT_FALSE(groups_patches(Variant::kPatchGGSAM));
}

TEST(DisjointSet, UnionFind) {
  DisjointSet s(5);
  EXPECT_TRUE(s.unite(0, 1));
  EXPECT_TRUE(s.unite(3, 4));
  EXPECT_FALSE(s.unite(1, 0));
  EXPECT_TRUE(s.unite(1, 4));
  EXPECT_EQ(s.find(0), s.find(3));
  EXPECT_NE(s.find(2), s.find(0));
}

}  // namespace
}  // namespace partguide
