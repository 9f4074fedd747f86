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

#include <cmath>
#include <set>

#include "oracles/brute_force.hpp"
#include "partguide/error.hpp"
#include "partguide/evaluation.hpp"
#include "partguide/rng.hpp"
#include "test_support.hpp"

namespace partguide {
namespace {

const std::string kFixtures = PARTGUIDE_FIXTURE_DIR;

BinaryGrid random_grid(Rng& rng, int w, int h, double p) {
  BinaryGrid g(w, h);
  for (std::int64_t i = 0; i < g.size(); ++i) g.set_index(i, rng.uniform() < p);
  return g;
}

TEST(Iou, Examples) {
  BinaryGrid left(10, 10), top(10, 10);
  left.fill({0, 0, 5, 10});
  top.fill({0, 0, 10, 5});
  EXPECT_EQ(iou_counts(left, top), (IoUCounts{25, 75}));
  EXPECT_DOUBLE_EQ(iou(left, top), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(left, left), 1.0);
  BinaryGrid right(10, 10);
  right.fill({5, 0, 10, 10});
  EXPECT_DOUBLE_EQ(iou(left, right), 0.0);
  EXPECT_DOUBLE_EQ(iou(BinaryGrid(10, 10), BinaryGrid(10, 10)), 1.0);
  EXPECT_DOUBLE_EQ(iou(BinaryGrid(10, 10), left), 0.0);
  EXPECT_THROW(iou(BinaryGrid(10, 10), BinaryGrid(10, 9)), Error);
  EXPECT_DOUBLE_EQ(iou(make_mask("a", "x", left), make_mask("a", "x", top)), 1.0 / 3.0);
}

TEST(Iou, RunIntersectionMatchesPixelLoop) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(32)), h = 1 + static_cast<int>(rng.below(32));
    const auto a = random_grid(rng, w, h, rng.uniform());
    const auto b = random_grid(rng, w, h, rng.uniform());
    const auto oracle_counts = oracle::pixel_iou(a.cells(), b.cells());
    const IoUCounts expect{oracle_counts.intersection, oracle_counts.union_};
    EXPECT_EQ(iou_counts(a, b), expect);
    EXPECT_EQ(iou_counts(make_mask("i", "p", a), make_mask("i", "p", b)), expect);
    EXPECT_EQ(iou_counts(b, a), expect);
  }
}

TEST(Iou, AddingTruePositivesNeverHurts) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = random_grid(rng, 16, 16, 0.4);
    auto pred = random_grid(rng, 16, 16, 0.3);
    double last = iou(pred, gt);
    for (int i = 0; i < 256; ++i) {
      if (gt.at_index(i) && !pred.at_index(i)) {
        pred.set_index(i);
        const double now = iou(pred, gt);
        EXPECT_GE(now, last);
        last = now;
      }
    }
  }
}

TEST(ScoreTable, VariantScoresFixture) {
  const auto t = read_score_table(kFixtures + "/variant_scores.csv");
  EXPECT_EQ(t.rows().size(), 9u);
  EXPECT_EQ(t.columns().size(), 6u);
  EXPECT_NEAR(t.column_average(t.column_index("lgsam")), 0.415, 0.0005);
  EXPECT_EQ(t.columns()[t.best_average_column()], "lgsam");
  ASSERT_TRUE(t.reported_averages.has_value());
  const auto avg = t.averages();
  for (std::size_t c = 0; c < avg.size(); ++c) EXPECT_NEAR(avg[c], (*t.reported_averages)[c], 0.0011);
  EXPECT_DOUBLE_EQ(t.at("wheel", "ggsam"), 0.683);
  EXPECT_THROW(t.at("spoiler", "ggsam"), Error);
}

TEST(ScoreTable, FusionOfRoiColumns) {
  const auto t = read_score_table(kFixtures + "/variant_scores.csv");
  const auto f = fuse_best_per_part(t, {"ggsam", "cgsam", "lgsam"});
  EXPECT_NEAR(f.average, 0.493, 0.0005);
  const double picked[] = {0.605, 0.638, 0.635, 0.377, 0.553, 0.259, 0.370, 0.314, 0.683};
  double sum = 0.0;
  for (double v : picked) sum += v;
  EXPECT_DOUBLE_EQ(f.average, sum / 9.0);
  EXPECT_EQ(f.chosen.at("bumper"), "ggsam");
  EXPECT_EQ(f.chosen.at("glass"), "lgsam");
  EXPECT_EQ(f.chosen.at("hood"), "cgsam");
  EXPECT_DOUBLE_EQ(f.upper, f.average);
  EXPECT_LE(f.lower, f.average);
}

TEST(ScoreTable, ThresholdFixtureBestColumn) {
  const auto t = read_score_table(kFixtures + "/threshold_scores.csv");
  EXPECT_EQ(t.columns()[t.best_average_column()], "0.5");
}

TEST(ScoreTable, SingleCell) {
  ScoreTable t({"door"}, {"lgsam"});
  t.set(0, 0, 0.42);
  EXPECT_DOUBLE_EQ(t.column_average(0), 0.42);
  const auto f = fuse_best_per_part(t, {"lgsam"});
  EXPECT_DOUBLE_EQ(f.average, 0.42);
  EXPECT_NE(format_table_text(t).find("0.420"), std::string::npos);
}

TEST(ScoreTable, RandomAveragesAndFusionDominance) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t R = 1 + rng.below(10), C = 1 + rng.below(6);
    std::vector<std::string> rows, cols;
    for (std::size_t r = 0; r < R; ++r) rows.push_back("p" + std::to_string(r));
    for (std::size_t c = 0; c < C; ++c) cols.push_back("v" + std::to_string(c));
    ScoreTable t(rows, cols);
    std::vector<std::vector<double>> v(R, std::vector<double>(C));
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) t.set(r, c, v[r][c] = rng.uniform());
    }
    const auto f = fuse_best_per_part(t, cols);
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < R; ++r) s += v[r][c];
      EXPECT_NEAR(t.column_average(c), s / static_cast<double>(R), 1e-12);
      EXPECT_GE(f.average + 1e-12, t.column_average(c));
    }
    const auto back = parse_score_table(format_table_csv(t));
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) EXPECT_NEAR(back.at(r, c), v[r][c], 5e-7);
    }
  }
}

TEST(ScoreTable, IdenticalColumnsKeepAverage) {
  ScoreTable t({"a", "b"}, {"x", "y"});
  t.set(0, 0, 0.3);
  t.set(0, 1, 0.3);
  t.set(1, 0, 0.6);
  t.set(1, 1, 0.6);
  const auto f = fuse_best_per_part(t, {"x", "y"});
  EXPECT_DOUBLE_EQ(f.average, 0.45);
  EXPECT_EQ(f.chosen.at("a"), "x");
}

TEST(ScoreTable, ParseErrors) {
  EXPECT_THROW(parse_score_table("part\n"), Error);
  EXPECT_THROW(parse_score_table("part,a,b\nx,0.1\n"), Error);
  EXPECT_THROW(parse_score_table("part,a\nx,0.1\nx,0.2\n"), Error);
  EXPECT_THROW(parse_score_table("part,a\nx,zero\n"), Error);
  const auto t = parse_score_table("part,a,b\nx,0.1,\n");
  EXPECT_FALSE(t.has(0, 1));
  EXPECT_THROW(t.require_complete(), Error);
}

TEST(VariantTable, PoolsCountsAndFlagsEmptyCase) {
  const std::vector<RunResult> runs{
      {"i1", "door", "lgsam", {5, 10}}, {"i2", "door", "lgsam", {5, 30}},
      {"i1", "door", "cgsam", {1, 10}}, {"i2", "door", "cgsam", {0, 0}},
  };
  const auto report = variant_table(runs, {}, {"cgsam", "lgsam"});
  EXPECT_DOUBLE_EQ(report.pooled.at("door", "lgsam"), 0.25);
  EXPECT_DOUBLE_EQ(report.per_image_mean.at("door", "lgsam"), (0.5 + 1.0 / 6.0) / 2.0);
  EXPECT_DOUBLE_EQ(report.pooled.at("door", "cgsam"), 0.1);
  EXPECT_DOUBLE_EQ(report.per_image_mean.at("door", "cgsam"), (0.1 + 1.0) / 2.0);
  EXPECT_EQ(report.pooled.columns()[0], "cgsam");
  bool noted = false;
  for (const auto& f : report.footnotes) noted = noted || f.find("IoU 1.0") != std::string::npos;
  EXPECT_TRUE(noted);
  const std::vector<RunResult> missing{{"i1", "door", "lgsam", {1, 2}}, {"i1", "hood", "cgsam", {1, 2}}};
  EXPECT_THROW(variant_table(missing), Error);
}

TEST(VariantTable, OneImagePooledEqualsPerImage) {
  Rng rng(4);
  std::vector<RunResult> runs;
  for (const char* p : {"a", "b", "c"}) {
    for (const char* v : {"x", "y"}) {
      const auto u = static_cast<std::int64_t>(1 + rng.below(100));
      runs.push_back({"only", p, v, {static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(u))), u}});
    }
  }
  const auto report = variant_table(runs);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 2; ++c) EXPECT_DOUBLE_EQ(report.pooled.at(r, c), report.per_image_mean.at(r, c));
  }
}

oracle::Cube random_cube(Rng& rng, std::size_t N, std::size_t P, std::size_t V) {
  oracle::Cube v(N, std::vector<std::vector<double>>(P, std::vector<double>(V)));
  for (auto& a : v) {
    for (auto& b : a) {
      for (auto& x : b) x = static_cast<double>(rng.below(9)) / 8.0;
    }
  }
  return v;
}

std::vector<std::string> names(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

TEST(Selection, MatchesExhaustiveExpectation) {
  Rng rng(5);
  const auto cube = random_cube(rng, 6, 3, 3);
  const auto scores = PerImageScores::from_iou_values(names("img", 6), names("p", 3), names("v", 3), cube);
  const auto curve = selection_experiment(scores, {2}, 10, 42);
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_NEAR(curve[0].mean, oracle::exhaustive_selection_mean(cube, 2), 0.02);
  EXPECT_EQ(curve[0].seeds.size(), 10u);
  EXPECT_EQ(curve[0].seeds[3], 45u);
}

TEST(Selection, ExactOracleAgreementPerSubset) {
  // With every subset drawn, means agree up to the count rounding.
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cube = random_cube(rng, 5, 2, 3);
    const auto scores = PerImageScores::from_iou_values(names("i", 5), names("p", 2), names("v", 3), cube);
    const std::vector<std::size_t> all{0, 1, 2, 3, 4};
    for (std::size_t a = 0; a < 5; ++a) {
      const std::vector<std::size_t> sample{a};
      const auto picks = scores.select(sample);
      double expect = 0.0;
      for (std::size_t p = 0; p < 2; ++p) {
        std::size_t best = 0;
        for (std::size_t v = 1; v < 3; ++v) {
          if (cube[a][p][v] > cube[a][p][best]) best = v;
        }
        EXPECT_EQ(picks[p], best);
        expect += oracle::set_mean(cube, all, p, best);
      }
      EXPECT_NEAR(scores.evaluate(picks), expect / 2.0, 1e-9);
    }
  }
}

TEST(Selection, BoundsAndFullSample) {
  Rng rng(7);
  const auto cube = random_cube(rng, 8, 4, 3);
  const auto scores = PerImageScores::from_iou_values(names("i", 8), names("p", 4), names("v", 3), cube);
  const auto curve = selection_experiment(scores, {1, 2, 4, 8}, 6, 1);
  for (const auto& pt : curve) {
    EXPECT_LE(pt.lower, pt.mean + 1e-12);
    EXPECT_LE(pt.mean, pt.upper + 1e-12);
    for (double v : pt.values) {
      EXPECT_LE(v, pt.upper + 1e-12);
      EXPECT_GE(v, pt.lower - 1e-12);
    }
  }
  const auto& full = curve.back();
  EXPECT_DOUBLE_EQ(full.stddev, 0.0);
  EXPECT_DOUBLE_EQ(full.mean, full.upper);
  EXPECT_THROW(selection_experiment(scores, {9}, 2, 1), Error);
  EXPECT_THROW(selection_experiment(scores, {0}, 2, 1), Error);
  EXPECT_THROW(selection_experiment(scores, {2}, 0, 1), Error);
}

TEST(Selection, DominantVariantIsConstant) {
  Rng rng(8);
  auto cube = random_cube(rng, 10, 3, 3);
  for (auto& img : cube) {
    for (auto& part : img) {
      part[1] = 0.95;
      part[0] = std::min(part[0], 0.9);
      part[2] = std::min(part[2], 0.9);
    }
  }
  const auto scores = PerImageScores::from_iou_values(names("i", 10), names("p", 3), names("v", 3), cube);
  for (const auto& pt : selection_experiment(scores, {1, 2, 4, 8}, 5, 3)) {
    for (double v : pt.values) EXPECT_DOUBLE_EQ(v, pt.upper);
  }
}

TEST(Selection, TiesGoToEarlierVariant) {
  const oracle::Cube cube{{{0.5, 0.5}}, {{0.5, 0.5}}};
  const auto scores = PerImageScores::from_iou_values(names("i", 2), {"p"}, {"ggsam", "cgsam"}, cube);
  const std::vector<std::size_t> sample{0};
  EXPECT_EQ(scores.select(sample), std::vector<std::size_t>{0});
}

TEST(Selection, PerImageCsvRoundTrip) {
  Rng rng(9);
  const auto cube = random_cube(rng, 4, 2, 2);
  const auto scores = PerImageScores::from_iou_values(names("i", 4), names("p", 2), names("v", 2), cube);
  const auto back = parse_per_image_csv(per_image_csv(scores));
  EXPECT_EQ(back.images(), scores.images());
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t v = 0; v < 2; ++v) EXPECT_EQ(back.at(i, p, v), scores.at(i, p, v));
    }
  }
  EXPECT_THROW(parse_per_image_csv("image_id,part,variant,intersection,union\na,p,v,1,1\n"
                                   "a,p,v,1,1\n"),
               Error);
  EXPECT_THROW(parse_per_image_csv("image_id,part,variant,intersection,union\na,p,v,3,1\n"), Error);
  const auto csv = selection_curve_csv(selection_experiment(scores, {1, 4}, 2, 5), 5);
  EXPECT_EQ(csv.rfind("# seed=5\nsample_size,mean,stddev,lower,upper,repetitions\n", 0), 0u);
}

TEST(ThresholdSweep, MatchesPerThresholdReruns) {
  Rng rng(10);
  std::vector<SweepItem> items;
  for (int i = 0; i < 6; ++i) {
    SweepItem it;
    it.image_id = "i" + std::to_string(i);
    it.part_class = i % 2 == 0 ? "door" : "wheel";
    it.ground_truth = random_grid(rng, 12, 12, 0.3);
    for (int k = 0; k < 3; ++k) it.instances.push_back({rng.uniform(), random_grid(rng, 12, 12, 0.2)});
    items.push_back(std::move(it));
  }
  const std::vector<double> ts{0.2, 0.5, 0.8};
  const auto table = threshold_sweep(items, ts);
  EXPECT_EQ(table.columns(), (std::vector<std::string>{"0.2", "0.5", "0.8"}));
  for (std::size_t c = 0; c < ts.size(); ++c) {
    for (const char* part : {"door", "wheel"}) {
      std::int64_t inter = 0, uni = 0;
      for (const auto& it : items) {
        if (it.part_class != part) continue;
        std::vector<std::uint8_t> pred(144, 0);
        for (const auto& inst : it.instances) {
          if (inst.confidence <= ts[c]) continue;
          for (int p = 0; p < 144; ++p) pred[static_cast<std::size_t>(p)] |= inst.mask.at_index(p) ? 1 : 0;
        }
        const auto counts = oracle::pixel_iou(pred, it.ground_truth.cells());
        inter += counts.intersection;
        uni += counts.union_;
      }
      EXPECT_DOUBLE_EQ(table.at(part, table.columns()[c]), uni == 0 ? 1.0 : static_cast<double>(inter) / uni);
    }
  }
  // Below every confidence nothing is dropped; above it, all predictions are empty.
  const auto edges = threshold_sweep(items, {-1.0, 1.0});
  const auto keep_all = threshold_sweep(items, {-0.5});
  for (const char* part : {"door", "wheel"}) EXPECT_DOUBLE_EQ(edges.at(part, "-1"), keep_all.at(part, "-0.5"));
  for (const auto& it : items) {
    if (it.ground_truth.popcount() > 0) {
      EXPECT_DOUBLE_EQ(edges.at(it.part_class, "1"), 0.0);
    }
  }
  EXPECT_THROW(threshold_sweep(items, {}), Error);
}

TEST(Format, TextTableBoldsRowMaxima) {
  const auto t = read_score_table(kFixtures + "/variant_scores.csv");
  const auto text = format_table_text(t, {"note"});
  EXPECT_NE(text.find("**0.605**"), std::string::npos);
  EXPECT_NE(text.find("**0.415**"), std::string::npos);
  EXPECT_NE(text.find("  * note"), std::string::npos);
  EXPECT_EQ(format_fixed(1.0 / 3.0, 3), "0.333");
}

}  // namespace
}  // namespace partguide
