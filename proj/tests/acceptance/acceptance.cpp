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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/brute_force.hpp"
#include "oracles/qp_oracle.hpp"
#include "partguide/classifier.hpp"
#include "partguide/corpus.hpp"
#include "partguide/evaluation.hpp"
#include "partguide/experiment.hpp"
#include "partguide/guidance.hpp"
#include "partguide/prototypes.hpp"
#include "partguide/rng.hpp"

namespace fs = std::filesystem;
using namespace partguide;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_seconds;
  std::function<Outcome()> check;
};

Outcome fusion_arithmetic() {
  const auto t = read_score_table(fs::path(PARTGUIDE_FIXTURE_DIR) / "variant_scores.csv");
  const auto f = fuse_best_per_part(t, {"ggsam", "cgsam", "lgsam"});
  const double lgsam = t.column_average(t.column_index("lgsam"));
  std::ostringstream d;
  d << "fused=" << format_fixed(f.average, 4) << " lgsam=" << format_fixed(lgsam, 4);
  return {std::abs(f.average - 0.493) <= 0.0005 && std::abs(lgsam - 0.415) <= 0.0005, d.str()};
}

Outcome grouping_oracle() {
  Rng rng(101);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = rng.below(17);
    std::vector<Patch> patches;
    std::vector<oracle::RawBox> raw;
    for (std::size_t i = 0; i < n; ++i) {
      const int x = static_cast<int>(rng.below(48)), y = static_cast<int>(rng.below(48));
      const int w = 1 + static_cast<int>(rng.below(12)), h = 1 + static_cast<int>(rng.below(12));
      patches.push_back({static_cast<int>(i), {x, y, x + w, y + h}});
      raw.push_back({x, y, x + w, y + h});
    }
    const auto comp = oracle::overlap_components(raw);
    const auto regions = group_rois(patches);
    std::vector<int> region_of(n, -1);
    bool ok = true;
    for (std::size_t r = 0; r < regions.size(); ++r) {
      int x0 = 1 << 30, y0 = 1 << 30, x1 = -(1 << 30), y1 = -(1 << 30);
      for (int m : regions[r].member_patches) {
        const auto i = static_cast<std::size_t>(m);
        if (region_of[i] != -1) ok = false;
        region_of[i] = static_cast<int>(r);
        x0 = std::min(x0, raw[i].x0);
        y0 = std::min(y0, raw[i].y0);
        x1 = std::max(x1, raw[i].x1);
        y1 = std::max(y1, raw[i].y1);
      }
      if (!(regions[r].roi == Box{x0, y0, x1, y1})) ok = false;
    }
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (region_of[i] < 0) ok = false;
      for (std::size_t j = 0; j < n && ok; ++j) {
        if ((comp[i] == comp[j]) != (region_of[i] == region_of[j])) ok = false;
      }
    }
    mismatches += ok ? 0 : 1;
  }
  return {mismatches == 0, std::to_string(mismatches) + "/1000 mismatches"};
}

Outcome svm_correctness() {
  Rng rng(202);
  double worst_obj = 0.0, worst_kkt = 0.0;
  int trials = 0;
  while (trials < 200) {
    const std::size_t n = 2 + rng.below(5), dim = 1 + rng.below(3);
    TrainingSet set;
    set.dim = dim;
    std::vector<float> x(dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : x) v = static_cast<float>(rng.normal());
      set.add(x, rng.uniform() < 0.5);
    }
    const int pos = std::accumulate(set.labels.begin(), set.labels.end(), 0);
    if (pos == 0 || pos == static_cast<int>(n)) continue;
    ++trials;
    TrainConfig cfg;
    cfg.C = std::exp(rng.uniform(-1.0, 3.0));
    cfg.gamma = std::exp(rng.uniform(-2.0, 1.0));
    cfg.balance_classes = rng.uniform() < 0.5;
    TrainReport report;
    const auto model = train(set, "x", cfg, &report);
    std::vector<std::vector<double>> K(n, std::vector<double>(n));
    std::vector<int> y(n);
    std::vector<double> C(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = set.labels[i] ? 1 : -1;
      C[i] = set.labels[i] ? model.C_positive : model.C_negative;
      for (std::size_t j = 0; j < n; ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double t = static_cast<double>(set.samples[i * dim + k]) - set.samples[j * dim + k];
          d += t * t;
        }
        K[i][j] = std::exp(-model.gamma * d);
      }
    }
    const auto best = oracle::solve_svm_dual(K, y, C);
    if (!best.found) return {false, "oracle found no feasible point"};
    worst_obj = std::max(worst_obj, std::abs(report.dual.objective - best.objective));
    worst_kkt = std::max(worst_kkt, oracle::kkt_gap(K, y, C, report.dual.alpha));
  }

  TrainingSet xor_set;
  xor_set.dim = 2;
  const std::vector<std::vector<float>> pts{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  const bool labels[] = {true, true, false, false};
  for (std::size_t i = 0; i < 4; ++i) xor_set.add(pts[i], labels[i]);
  TrainConfig xc;
  xc.C = 10.0;
  xc.gamma = 1.0;
  const auto xm = train(xor_set, "xor", xc);
  int correct = 0;
  for (std::size_t i = 0; i < 4; ++i) correct += (xm.decision_value(pts[i]) > 0.0) == labels[i] ? 1 : 0;

  std::ostringstream d;
  d << "max |obj-oracle|=" << worst_obj << " max kkt=" << worst_kkt << " xor=" << correct << "/4";
  return {worst_obj <= 1e-3 && worst_kkt < 1e-3 && correct == 4, d.str()};
}

Outcome auc_oracle() {
  Rng rng(303);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<int> l(n);
    const std::uint64_t levels = 1 + rng.below(12);  // few levels, many ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
      l[i] = static_cast<int>(rng.below(2));
    }
    l[0] = 1;
    l[1] = 0;
    if (auc(s, l) != oracle::pairwise_auc(s, l)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + "/500 mismatches"};
}

Outcome iou_oracle() {
  Rng rng(404);
  int bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(32)), h = 1 + static_cast<int>(rng.below(32));
    BinaryGrid a(w, h), b(w, h);
    const double pa = rng.uniform(), pb = rng.uniform();
    for (std::int64_t i = 0; i < a.size(); ++i) {
      a.set_index(i, rng.uniform() < pa);
      b.set_index(i, rng.uniform() < pb);
    }
    const auto px = oracle::pixel_iou(a.cells(), b.cells());
    const double expect =
        px.union_ == 0 ? 1.0 : static_cast<double>(px.intersection) / static_cast<double>(px.union_);
    const auto ma = make_mask("i", "p", a), mb = make_mask("i", "p", b);
    if (iou(a, b) != expect || iou(ma, mb) != expect) ++bad;
    if (iou(a, b) != iou(b, a) || iou(ma, mb) != iou(mb, ma)) ++bad;
    if (iou(a, a) != 1.0 || iou(ma, ma) != 1.0) ++bad;
  }
  return {bad == 0, std::to_string(bad) + " violations over 500 pairs"};
}

Outcome click_simulator() {
  int bad = 0, patterns = 0;
  for (std::size_t size = 1; size <= 8; ++size) {
    Prototype p;
    p.id = static_cast<int>(size);
    for (std::size_t i = 0; i < size; ++i) p.members.push_back({"img", static_cast<int>(i)});
    for (unsigned mask = 0; mask < (1u << size); ++mask) {
      std::map<PatchKey, bool> truth;
      int pos = 0;
      for (std::size_t i = 0; i < size; ++i) {
        const bool v = (mask >> i) & 1u;
        truth[p.members[i]] = v;
        pos += v ? 1 : 0;
      }
      const auto rec = simulate_annotation(p, truth, "x");
      const int neg = static_cast<int>(size) - pos;
      if (rec.clicks != 1 + std::min(pos, neg)) ++bad;
      if ((pos == 0 || neg == 0) && rec.clicks != 1) ++bad;
      for (const auto& [key, label] : expand_record(p, rec)) bad += label == truth.at(key) ? 0 : 1;
      ++patterns;
    }
  }
  return {bad == 0, std::to_string(patterns) + " patterns, " + std::to_string(bad) + " violations"};
}

std::vector<std::string> labels(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

Outcome selection_experiment_check() {
  Rng rng(505);
  // Dominant variant 1 on every image and part.
  oracle::Cube dom(12, std::vector<std::vector<double>>(4, std::vector<double>(3)));
  for (auto& img : dom) {
    for (auto& part : img) {
      part = {rng.uniform(0.0, 0.5), rng.uniform(0.6, 1.0), rng.uniform(0.0, 0.5)};
    }
  }
  const auto dscores = PerImageScores::from_iou_values(labels("i", 12), labels("p", 4), labels("v", 3), dom);
  bool constant = true;
  for (const auto& pt : selection_experiment(dscores, {1, 2, 4, 8, 12}, 10, 9)) {
    for (double v : pt.values) constant = constant && v == pt.upper;
  }

  oracle::Cube cube(8, std::vector<std::vector<double>>(3, std::vector<double>(3)));
  for (auto& img : cube) {
    for (auto& part : img) {
      for (auto& v : part) v = rng.uniform();
    }
  }
  const auto scores = PerImageScores::from_iou_values(labels("i", 8), labels("p", 3), labels("v", 3), cube);
  const auto full = selection_experiment(scores, {8}, 10, 4);
  const bool zero_var = full[0].stddev == 0.0 && full[0].mean == full[0].upper;

  oracle::Cube six(cube.begin(), cube.begin() + 6);
  const auto six_scores = PerImageScores::from_iou_values(labels("i", 6), labels("p", 3), labels("v", 3), six);
  const auto mc = selection_experiment(six_scores, {2}, 10, 42);
  const double exact = oracle::exhaustive_selection_mean(six, 2);
  const double gap = std::abs(mc[0].mean - exact);
  std::ostringstream d;
  d << "dominant constant=" << (constant ? "yes" : "no") << " full-n stddev=" << full[0].stddev
    << " C(6,2) gap=" << format_fixed(gap, 4);
  return {constant && zero_var && gap <= 0.02, d.str()};
}

Outcome synthetic_end_to_end() {
  SyntheticConfig sc;
  sc.images = 80;
  sc.seed = 7;
  const auto corpus = make_synthetic_corpus(sc);
  std::vector<std::size_t> pool(64), test(16);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::iota(test.begin(), test.end(), std::size_t{64});
  CurveConfig cc;
  cc.train_sizes = {4, 16, 64};
  cc.repetitions = 10;
  cc.seed = 1;
  cc.variants = {Variant::kLGSAM};
  cc.fusion_variants = {Variant::kLGSAM};
  const auto curve = label_efficiency_curve(corpus, pool, test, cc, PipelineConfig{}, oracle_backend_factory(corpus));
  const double at4 = curve[0].at("lgsam").mean, at16 = curve[1].at("lgsam").mean, at64 = curve[2].at("lgsam").mean;
  std::ostringstream d;
  d << "lgsam pooled IoU @4=" << format_fixed(at4, 4) << " @16=" << format_fixed(at16, 4)
    << " @64=" << format_fixed(at64, 4) << " (10 seeds)";
  return {at64 >= 0.9 && at64 >= at16 && at16 >= at4, d.str()};
}

int sh(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism() {
  const std::string cli = PARTGUIDE_CLI_PATH;
  const auto base = fs::temp_directory_path() / ("partguide-accept-" + std::to_string(std::random_device{}()));
  const std::vector<std::string> reports{"table.csv", "per_image.csv", "selection.csv", "curve.csv"};
  std::vector<std::string> first;
  std::string detail;
  bool ok = true;
  for (int run = 0; run < 2 && ok; ++run) {
    const auto d = base / ("run" + std::to_string(run));
    const auto data = (d / "data").string(), o = d.string();
    const std::vector<std::string> steps{
        cli + " synth --out " + data + " --images 24 --seed 11",
        cli + " train --data " + data + " --holdout 8 --seed 5 --out " + o + "/models",
        cli + " infer --data " + data + " --models " + o + "/models --holdout 8 --variant ggsam --variant cgsam"
            " --variant lgsam --out " + o + "/pred",
        cli + " eval --data " + data + " --predictions " + o + "/pred --holdout 8 --out " + o + "/table.csv"
            " --per-image " + o + "/per_image.csv",
        cli + " fuse --per-image " + o + "/per_image.csv --sizes 1,2,4 --reps 5 --seed 3 --out " + o +
            "/selection.csv",
        cli + " curve --data " + data + " --holdout 8 --sizes 2,4,8 --reps 2 --seed 3 --variant lgsam"
            " --variant cgsam --out " + o + "/curve.csv",
    };
    for (const auto& s : steps) {
      if (sh(s) != 0) {
        ok = false;
        detail = "step failed: " + s;
        break;
      }
    }
    for (std::size_t i = 0; i < reports.size() && ok; ++i) {
      const auto text = slurp(d / reports[i]);
      if (text.empty()) {
        ok = false;
        detail = reports[i] + " is empty";
      } else if (run == 0) {
        first.push_back(text);
      } else if (text != first[i]) {
        ok = false;
        detail = reports[i] + " differs between runs";
      }
    }
  }
  std::error_code ec;
  fs::remove_all(base, ec);
  if (ok) detail = std::to_string(reports.size()) + " reports byte-identical across 2 runs";
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"fusion-arithmetic", 1.0, fusion_arithmetic},
      {"grouping-oracle", 10.0, grouping_oracle},
      {"svm-correctness", 60.0, svm_correctness},
      {"auc-oracle", 5.0, auc_oracle},
      {"iou-oracle", 60.0, iou_oracle},
      {"click-simulator", 60.0, click_simulator},
      {"selection-experiment", 60.0, selection_experiment_check},
      {"synthetic-end-to-end", 300.0, synthetic_end_to_end},
      {"cli-determinism", 300.0, cli_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.check();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = out.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s %-22s %s [%.2fs / %.0fs]%s\n", pass ? "PASS" : "FAIL", c.name.c_str(), out.detail.c_str(), secs,
                c.limit_seconds, in_time ? "" : " too slow");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
