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

#include "partguide/cli.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "partguide/classifier.hpp"
#include "partguide/corpus.hpp"
#include "partguide/dataset.hpp"
#include "partguide/error.hpp"
#include "partguide/evaluation.hpp"
#include "partguide/experiment.hpp"
#include "partguide/guidance.hpp"
#include "partguide/http_backend.hpp"
#include "partguide/label_store.hpp"
#include "partguide/prototypes.hpp"
#include "partguide/rng.hpp"
#include "partguide/segmentation.hpp"
#include "partguide/service.hpp"

namespace partguide {
namespace {

namespace fs = std::filesystem;

// --- helpers -----------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.close();
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    write_file(path, content);
  }
}

CLI::Validator variant_validator() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        if (parse_variant(s)) return {};
        std::string names;
        for (auto v : all_variants()) names += (names.empty() ? "" : ", ") + to_string(v);
        return "unknown variant '" + s + "' (expected one of " + names + ")";
      },
      "VARIANT");
}

std::vector<Variant> parse_variants(const std::vector<std::string>& names, std::span<const Variant> fallback) {
  if (names.empty()) return {fallback.begin(), fallback.end()};
  std::vector<Variant> out;
  for (const auto& n : names) {
    const auto v = parse_variant(n);
    if (!v) fail(ErrorCode::kInvalidArgument, "unknown variant '" + n + "'");
    if (std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(*v);
  }
  // Report columns follow the declared order.
  std::sort(out.begin(), out.end());
  return out;
}

struct GridOptions {
  std::optional<int> divisor;
  std::optional<double> overlap;

  void add(CLI::App* app) {
    app->add_option("--divisor", divisor, "patch size = round(min(W,H) / divisor) [grid.json or 14]");
    app->add_option("--overlap", overlap, "overlap fraction of neighbouring patches [grid.json or 0.5]");
  }

  // Flags beat <data>/grid.json, which beats the defaults.
  GridConfig resolve(const fs::path& data_dir) const {
    GridConfig cfg;
    const auto meta = data_dir / "grid.json";
    if (!data_dir.empty() && fs::exists(meta)) {
      try {
        const auto j = nlohmann::json::parse(read_file(meta));
        cfg.divisor = j.value("divisor", cfg.divisor);
        cfg.overlap_fraction = j.value("overlap_fraction", cfg.overlap_fraction);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kFormat, meta.string() + ": " + e.what());
      }
    }
    if (divisor) cfg.divisor = *divisor;
    if (overlap) cfg.overlap_fraction = *overlap;
    return cfg;
  }
};

std::string grid_meta_json(const GridConfig& cfg) {
  nlohmann::ordered_json j;
  j["divisor"] = cfg.divisor;
  j["overlap_fraction"] = cfg.overlap_fraction;
  return j.dump(2) + "\n";
}

void require(bool present, const std::string& flag) {
  if (!present) fail(ErrorCode::kInvalidArgument, flag + " is required");
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// The last `holdout` manifest images are held out; without a holdout both
// sides are the whole corpus.
Split split_corpus(const Corpus& corpus, std::size_t holdout) {
  const std::size_t n = corpus.images.size();
  if (holdout >= n && holdout > 0) {
    fail(ErrorCode::kInvalidArgument, "--holdout " + std::to_string(holdout) + " leaves no training images (corpus has " +
                                          std::to_string(n) + ")");
  }
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    if (holdout == 0 || i < n - holdout) s.train.push_back(i);
    if (holdout == 0 || i >= n - holdout) s.test.push_back(i);
  }
  return s;
}

std::vector<std::size_t> pick_images(const Corpus& corpus, const std::vector<std::string>& ids, std::size_t holdout) {
  if (ids.empty()) return split_corpus(corpus, holdout).test;
  std::vector<std::size_t> out;
  for (const auto& id : ids) out.push_back(corpus.index_of(id));
  return out;
}

std::vector<std::string> pick_parts(const Corpus& corpus, const std::vector<std::string>& parts) {
  if (parts.empty()) return corpus.part_classes;
  for (const auto& p : parts) {
    if (std::find(corpus.part_classes.begin(), corpus.part_classes.end(), p) == corpus.part_classes.end()) {
      fail(ErrorCode::kNotFound, "unknown part '" + p + "'");
    }
  }
  return parts;
}

struct TrainOptions {
  double C = 1.0;
  std::string gamma = "auto";
  double tolerance = 1e-3;
  int max_passes = 1000;
  bool no_balance = false;

  void add(CLI::App* app) {
    app->add_option("--C", C, "SVM box constraint")->check(CLI::PositiveNumber);
    app->add_option("--gamma", gamma, "RBF gamma or 'auto' = 1/(dim * variance)");
    app->add_option("--tolerance", tolerance, "SMO stopping tolerance")->check(CLI::PositiveNumber);
    app->add_option("--max-passes", max_passes, "SMO iteration budget, in multiples of the sample count")
        ->check(CLI::PositiveNumber);
    app->add_flag("--no-balance", no_balance, "do not reweight C by class frequency");
  }

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.C = C;
    if (gamma != "auto") {
      try {
        cfg.gamma = std::stod(gamma);
      } catch (const std::exception&) {
        fail(ErrorCode::kInvalidArgument, "--gamma must be a number or 'auto'");
      }
      if (!(*cfg.gamma > 0.0)) fail(ErrorCode::kInvalidArgument, "--gamma must be positive");
    }
    cfg.tolerance = tolerance;
    cfg.max_passes = max_passes;
    cfg.seed = seed;
    cfg.balance_classes = !no_balance;
    return cfg;
  }
};

BackendFactory backend_factory(const std::string& spec, const Corpus& corpus) {
  // Validate the backend string once up front.
  if (spec != "oracle" && spec != "boxfill" && spec.rfind("cmd:", 0) != 0 && spec.rfind("http://", 0) != 0) {
    fail(ErrorCode::kInvalidArgument, "unknown backend '" + spec + "' (oracle, boxfill, cmd:<command>, http://...)");
  }
  return [spec, &corpus](const std::string& part) {
    return make_backend(spec, spec == "oracle" ? ground_truth_by_image(corpus, part)
                                               : std::map<std::string, BinaryGrid>{});
  };
}

// --- subcommands ---------------------------------------------------------------

struct GridCmd {
  std::string manifest, out;
  GridOptions grid;

  int run(std::ostream& out_stream) const {
    require(!manifest.empty(), "--manifest");
    const auto m = load_manifest(manifest);
    const auto cfg = grid.resolve(fs::path(manifest).parent_path());
    std::vector<PatchGrid> grids;
    for (const auto& img : m.images) grids.push_back(build_grid(img.id, img.width, img.height, cfg));
    emit(out, grids_to_json(grids, cfg) + "\n", out_stream);
    return kExitOk;
  }
};

struct SynthCmd {
  std::string out;
  SyntheticConfig cfg;

  int run(std::ostream& out_stream) const {
    require(!out.empty(), "--out");
    const auto corpus = make_synthetic_corpus(cfg);
    write_corpus(out, corpus, synthetic_similarity(corpus, cfg.seed + 1));
    write_file(fs::path(out) / "grid.json", grid_meta_json(cfg.grid));
    out_stream << "wrote " << corpus.images.size() << " images, " << corpus.features.size() << " patches, dim "
               << corpus.features.dim() << " to " << out << "\n";
    return kExitOk;
  }
};

struct PrototypesCmd {
  std::string data, scores, out;
  ClusterConfig cluster;
  std::size_t report_k = 0;
  double coverage = 0.25;
  GridOptions grid;

  int run(std::ostream& out_stream) const {
    require(!data.empty(), "--data");
    const auto manifest = load_manifest(fs::path(data) / "manifest.json");
    const auto features = read_features(fs::path(data) / "features.gsfv");
    const auto score_path = scores.empty() ? fs::path(data) / "scores.csv" : fs::path(scores);
    const auto sim = load_similarity_scores(score_path, manifest.merge_table);
    auto protos = cluster_prototypes(features, cluster);
    score_prototypes(protos, sim);
    const auto out_path = out.empty() ? fs::path(data) / "prototypes.json" : fs::path(out);
    write_file(out_path, prototypes_to_json(protos, cluster) + "\n");
    out_stream << "wrote " << protos.size() << " prototypes to " << out_path.string() << "\n";
    if (report_k > 0) {
      const auto corpus = load_corpus(manifest, features, grid.resolve(data));
      out_stream << "part,k,precision_raw_patch,precision_prototype\n";
      for (const auto& cls : corpus.part_classes) {
        std::set<PatchKey> positives;
        for (const auto& [key, label] : ground_truth_patch_labels(corpus, cls, coverage)) {
          if (label) positives.insert(key);
        }
        const auto prec = retrieval_efficacy(protos, sim, cls, positives, report_k);
        out_stream << cls << ',' << report_k << ',' << format_fixed(prec.raw_patch) << ','
                   << format_fixed(prec.prototype) << "\n";
      }
    }
    return kExitOk;
  }
};

struct AnnotateSimCmd {
  std::string data, prototypes, store, report;
  std::vector<std::string> parts;
  std::size_t limit = 0;
  double coverage = 0.25;
  GridOptions grid;

  int run(std::ostream& out_stream) const {
    require(!data.empty(), "--data");
    const auto corpus = load_corpus_dir(data, grid.resolve(data));
    const auto protos =
        read_prototypes(prototypes.empty() ? fs::path(data) / "prototypes.json" : fs::path(prototypes));
    LabelStore labels(resolve_store_path(store.empty() ? fs::path(data) / "labels.jsonl" : fs::path(store)));
    std::vector<AnnotationRecord> written;
    std::map<std::string, PolygonCost> polygons;
    for (const auto& cls : pick_parts(corpus, parts)) {
      const auto truth = ground_truth_patch_labels(corpus, cls, coverage);
      const auto order = rank_prototypes(protos, cls);
      const std::size_t n = limit == 0 ? order.size() : std::min(limit, order.size());
      for (std::size_t i = 0; i < n; ++i) {
        auto rec = simulate_annotation(protos[order[i]], truth, cls);
        rec.annotator = "simulator";
        labels.append(rec);
        written.push_back(std::move(rec));
      }
      PolygonCost poly{{}, true};
      for (const auto& img : corpus.images) {
        poly.vertices_per_image.push_back(approximate_polygon_vertices(img.ground_truth.at(cls)));
      }
      polygons.emplace(cls, std::move(poly));
    }
    std::ostringstream table;
    table << "part,images,patch_clicks,polygon_vertices,patch_per_image,polygon_per_image,ratio,approximate\n";
    for (const auto& c : annotation_cost_comparison(written, polygons)) {
      table << c.part_class << ',' << c.images << ',' << c.patch_clicks << ',' << c.polygon_clicks << ','
            << format_fixed(c.patch_per_image) << ',' << format_fixed(c.polygon_per_image) << ','
            << format_fixed(c.ratio) << ',' << (c.approximate ? 1 : 0) << "\n";
    }
    out_stream << "appended " << written.size() << " records to " << labels.path().string() << "\n";
    emit(report, table.str(), out_stream);
    return kExitOk;
  }
};

struct TrainCmd {
  std::string data, out, labels, prototypes;
  std::vector<std::string> parts;
  std::size_t images = 0, holdout = 0;
  std::uint64_t seed = 7;
  double coverage = 0.25;
  TrainOptions train;
  GridOptions grid;

  int run(std::ostream& out_stream, std::ostream& err) const {
    require(!data.empty(), "--data");
    const auto corpus = load_corpus_dir(data, grid.resolve(data));
    auto pool = split_corpus(corpus, holdout).train;
    const std::size_t n = images == 0 ? pool.size() : images;
    if (n > pool.size()) {
      fail(ErrorCode::kInvalidArgument, "--images " + std::to_string(n) + " exceeds the " +
                                            std::to_string(pool.size()) + " training images");
    }
    Rng rng(seed);
    rng.shuffle(std::span(pool));
    const std::span<const std::size_t> chosen(pool.data(), n);

    std::vector<Prototype> protos;
    std::vector<AnnotationRecord> records;
    if (!labels.empty()) {
      protos = read_prototypes(prototypes.empty() ? fs::path(data) / "prototypes.json" : fs::path(prototypes));
      records = LabelStore(labels).records();
    }
    const auto cfg = train.resolve(seed);
    const fs::path out_dir = out.empty() ? fs::path(data) / "models" : fs::path(out);
    out_stream << "part,samples,positives,negatives,support_vectors,iterations,converged,train_auc\n";
    for (const auto& cls : pick_parts(corpus, parts)) {
      const auto set = labels.empty() ? build_training_set(corpus, chosen, cls, coverage)
                                      : build_training_set_from_records(corpus, chosen, protos, records, cls);
      const auto pos = static_cast<std::size_t>(std::count(set.labels.begin(), set.labels.end(), 1));
      if (pos == 0 || pos == set.size()) {
        err << "warning: '" << cls << "' has a single label in the training images; no model written\n";
        fs::remove(out_dir / (cls + ".model"));
        continue;
      }
      TrainReport report;
      const auto model = partguide::train(set, cls, cfg, &report);
      write_model(out_dir / (cls + ".model"), model);
      std::vector<double> scores;
      for (std::size_t i = 0; i < set.size(); ++i) {
        scores.push_back(model.predict(std::span(set.samples).subspan(i * set.dim, set.dim)));
      }
      out_stream << cls << ',' << set.size() << ',' << report.positives << ',' << report.negatives << ','
                 << model.support_count() << ',' << report.dual.iterations << ',' << (report.dual.converged ? 1 : 0)
                 << ',' << format_fixed(auc(scores, set.labels)) << "\n";
    }
    return kExitOk;
  }
};

ModelSet load_models(const Corpus& corpus, const fs::path& dir, const std::vector<std::string>& parts) {
  ModelSet models;
  for (const auto& cls : parts) {
    const auto path = dir / (cls + ".model");
    models[cls] = fs::exists(path) ? std::optional(read_model(path)) : std::nullopt;
    if (models[cls] && models[cls]->feature_dim != corpus.features.dim()) {
      fail(ErrorCode::kFormat, path.string() + ": model dim " + std::to_string(models[cls]->feature_dim) +
                                   " does not match features dim " + std::to_string(corpus.features.dim()));
    }
  }
  return models;
}

struct InferCmd {
  std::string data, models, out, backend = "oracle";
  std::vector<std::string> variants, images, parts;
  std::size_t holdout = 0, max_in_flight = 4;
  double threshold = 0.5;
  GridOptions grid;

  int run(std::ostream& out_stream, std::ostream& err) const {
    const auto vs = parse_variants(variants, all_variants());
    require(!data.empty(), "--data");
    const auto corpus = load_corpus_dir(data, grid.resolve(data));
    const auto chosen = pick_images(corpus, images, holdout);
    const auto classes = pick_parts(corpus, parts);
    const auto model_set = load_models(corpus, models.empty() ? fs::path(data) / "models" : fs::path(models), classes);
    const auto factory = backend_factory(backend, corpus);
    PipelineConfig cfg;
    cfg.confidence_threshold = threshold;
    cfg.max_in_flight = max_in_flight;
    const fs::path out_dir = out.empty() ? fs::path(data) / "predictions" : fs::path(out);
    std::size_t written = 0, failures = 0, no_regions = 0;
    for (const auto& cls : classes) {
      auto be = factory(cls);
      for (auto v : vs) {
        for (auto i : chosen) {
          const auto& img = corpus.images[i];
          const auto pred = predict_image(corpus, img, cls, model_set.at(cls), v, *be, cfg);
          for (const auto& f : pred.failures) {
            err << "warning: " << img.id << '/' << cls << '/' << to_string(v) << " region " << f.region << ": "
                << f.message << "\n";
          }
          failures += pred.failures.size();
          if (pred.scores.empty()) ++no_regions;
          write_mask_file(out_dir / to_string(v) / (img.id + "_" + cls + ".json"), make_mask(img.id, cls, pred.mask));
          ++written;
        }
      }
    }
    out_stream << "wrote " << written << " predictions to " << out_dir.string() << " (" << failures
               << " failed regions, " << no_regions << " empty for lack of confident patches)\n";
    return failures == 0 ? kExitOk : kExitRuntime;
  }
};

std::vector<std::string> fusion_candidates(const ScoreTable& table, const std::vector<std::string>& requested) {
  const auto wanted = parse_variants(requested, roi_variants());
  std::vector<std::string> out;
  for (auto v : wanted) {
    for (const auto& col : table.columns()) {
      if (parse_variant(col) == v) out.push_back(col);
    }
  }
  if (out.size() != wanted.size()) fail(ErrorCode::kNotFound, "table lacks a column for some fusion candidate");
  return out;
}

struct EvalCmd {
  std::string fixture, data, predictions, models, out_csv, per_image, backend = "oracle";
  std::vector<std::string> candidates, images, parts, variants;
  std::vector<double> sweep;
  std::size_t holdout = 0;
  bool fuse = false;
  GridOptions grid;

  int run(std::ostream& out_stream) const {
    if (!fixture.empty()) return run_fixture(out_stream);
    require(!data.empty(), "--fixture or --data");
    if (!sweep.empty()) return run_sweep(out_stream);
    return run_predictions(out_stream);
  }

  int run_fixture(std::ostream& out_stream) const {
    const auto table = read_score_table(fixture);
    table.require_complete();
    out_stream << format_table_text(table);
    if (table.reported_averages) {
      const auto avg = table.averages();
      for (std::size_t c = 0; c < avg.size(); ++c) {
        if (std::abs(avg[c] - (*table.reported_averages)[c]) > 0.0015) {
          out_stream << "  * note: computed average of " << table.columns()[c] << " (" << format_fixed(avg[c], 3)
                     << ") differs from the file's average row (" << format_fixed((*table.reported_averages)[c], 3)
                     << ")\n";
        }
      }
    }
    out_stream << "best average column: " << table.columns()[table.best_average_column()] << "\n";
    if (fuse) {
      const auto sel = fuse_best_per_part(table, fusion_candidates(table, candidates));
      for (const auto& part : table.rows()) out_stream << "  " << part << " -> " << sel.chosen.at(part) << "\n";
      out_stream << "fused average: " << format_fixed(sel.average, 3) << "\n";
    }
    if (!out_csv.empty()) write_file(out_csv, format_table_csv(table));
    return kExitOk;
  }

  int run_predictions(std::ostream& out_stream) const {
    const auto corpus = load_corpus_dir(data, grid.resolve(data));
    const auto chosen = pick_images(corpus, images, holdout);
    const auto classes = pick_parts(corpus, parts);
    const fs::path dir = predictions.empty() ? fs::path(data) / "predictions" : fs::path(predictions);
    std::vector<Variant> present;
    for (auto v : parse_variants(variants, all_variants())) {
      if (fs::is_directory(dir / to_string(v))) present.push_back(v);
    }
    if (present.empty()) fail(ErrorCode::kNotFound, "no variant directories under " + dir.string());
    std::vector<std::string> ids;
    for (auto i : chosen) ids.push_back(corpus.images[i].id);
    std::vector<std::string> names;
    for (auto v : present) names.push_back(to_string(v));
    PerImageScores scores(ids, classes, names);
    std::vector<RunResult> runs;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const auto& img = corpus.images[chosen[k]];
      for (std::size_t p = 0; p < classes.size(); ++p) {
        for (std::size_t v = 0; v < present.size(); ++v) {
          const auto path = dir / names[v] / (img.id + "_" + classes[p] + ".json");
          const auto mask = read_mask_file(path);
          if (mask.image_id != img.id || mask.width != img.width || mask.height != img.height) {
            fail(ErrorCode::kFormat, path.string() + ": prediction does not match image '" + img.id + "'");
          }
          const auto counts = iou_counts(decode_rle(mask), img.ground_truth.at(classes[p]));
          scores.at(k, p, v) = counts;
          runs.push_back({img.id, classes[p], names[v], counts});
        }
      }
    }
    const auto report = variant_table(runs, classes, names);
    auto notes = report.footnotes;
    out_stream << format_table_text(report.pooled, notes);
    out_stream << "\nper-image mean IoU\n" << format_table_text(report.per_image_mean);
    if (!out_csv.empty()) write_file(out_csv, format_table_csv(report.pooled));
    if (!per_image.empty()) write_file(per_image, per_image_csv(scores));
    return kExitOk;
  }

  // Detections are ROI regions scored by their peak patch confidence; a
  // threshold keeps regions whose peak exceeds it.
  int run_sweep(std::ostream& out_stream) const {
    const auto corpus = load_corpus_dir(data, grid.resolve(data));
    const auto chosen = pick_images(corpus, images, holdout);
    const auto classes = pick_parts(corpus, parts);
    const auto model_set = load_models(corpus, models.empty() ? fs::path(data) / "models" : fs::path(models), classes);
    const auto variant = parse_variants(variants, roi_variants()).front();
    const auto factory = backend_factory(backend, corpus);
    const double floor_t = *std::min_element(sweep.begin(), sweep.end());
    std::vector<SweepItem> items;
    for (const auto& cls : classes) {
      auto be = factory(cls);
      for (auto i : chosen) {
        const auto& img = corpus.images[i];
        SweepItem item{img.id, cls, img.ground_truth.at(cls), {}};
        if (const auto& model = model_set.at(cls)) {
          const auto conf = image_confidences(corpus, img, *model);
          const auto regions = guide(img.grid, conf, variant, floor_t, cls);
          for (const auto& r : regions) {
            const std::span<const PromptedRegion> one(&r, 1);
            auto pred = segment_regions(img.id, img.width, img.height, one, variant, *be);
            item.instances.push_back({r.peak_confidence, std::move(pred.mask)});
          }
        }
        items.push_back(std::move(item));
      }
    }
    const auto table = threshold_sweep(items, sweep);
    out_stream << format_table_text(table);
    out_stream << "best average column: " << table.columns()[table.best_average_column()] << "\n";
    if (!out_csv.empty()) write_file(out_csv, format_table_csv(table));
    return kExitOk;
  }
};

struct FuseCmd {
  std::string table, per_image, out;
  std::vector<std::string> candidates;
  std::vector<std::size_t> sizes;
  std::size_t repetitions = 10;
  std::uint64_t seed = 7;

  int run(std::ostream& out_stream) const {
    if (!table.empty()) {
      const auto t = read_score_table(table);
      const auto sel = fuse_best_per_part(t, fusion_candidates(t, candidates));
      std::ostringstream csv;
      csv << "part,chosen,iou\n";
      for (const auto& part : t.rows()) {
        csv << part << ',' << sel.chosen.at(part) << ',' << format_fixed(t.at(part, sel.chosen.at(part))) << "\n";
      }
      csv << "average,," << format_fixed(sel.average) << "\n";
      emit(out, csv.str(), out_stream);
      if (!out.empty()) out_stream << "fused average: " << format_fixed(sel.average, 3) << "\n";
      return kExitOk;
    }
    require(!per_image.empty(), "--table or --per-image");
    auto scores = parse_per_image_csv(read_file(per_image));
    // Keep only the candidate variants, in declared order.
    const auto wanted = parse_variants(candidates, roi_variants());
    std::vector<std::size_t> cols;
    std::vector<std::string> names;
    for (auto v : wanted) {
      const auto& vs = scores.variants();
      const auto it = std::find(vs.begin(), vs.end(), to_string(v));
      if (it == vs.end()) fail(ErrorCode::kNotFound, "per-image file has no variant '" + to_string(v) + "'");
      cols.push_back(static_cast<std::size_t>(it - vs.begin()));
      names.push_back(to_string(v));
    }
    PerImageScores sub(scores.images(), scores.parts(), names);
    for (std::size_t i = 0; i < scores.images().size(); ++i) {
      for (std::size_t p = 0; p < scores.parts().size(); ++p) {
        for (std::size_t v = 0; v < cols.size(); ++v) sub.at(i, p, v) = scores.at(i, p, cols[v]);
      }
    }
    auto ns = sizes;
    if (ns.empty()) {
      for (std::size_t n = 1; n <= sub.images().size(); n *= 2) ns.push_back(n);
    }
    const auto curve = selection_experiment(sub, ns, repetitions, seed);
    emit(out, selection_curve_csv(curve, seed), out_stream);
    out_stream << "note: selections are scored on the full image set, which includes the sampled images\n";
    return kExitOk;
  }
};

struct CurveCmd {
  std::string data, out, backend = "oracle";
  std::vector<std::string> variants, fusion;
  std::vector<std::size_t> sizes;
  std::size_t repetitions = 3, holdout = 0;
  std::uint64_t seed = 7;
  double threshold = 0.5, coverage = 0.25;
  TrainOptions train;
  GridOptions grid;

  int run(std::ostream& out_stream) const {
    const auto vs = parse_variants(variants, all_variants());
    const auto fv = parse_variants(fusion, roi_variants());
    require(!data.empty(), "--data");
    require(holdout > 0, "--holdout");
    const auto corpus = load_corpus_dir(data, grid.resolve(data));
    const auto split = split_corpus(corpus, holdout);
    CurveConfig cc;
    if (!sizes.empty()) {
      cc.train_sizes = sizes;
    } else {
      cc.train_sizes.clear();
      for (std::size_t n = 1; n <= split.train.size(); n *= 2) cc.train_sizes.push_back(n);
    }
    cc.repetitions = repetitions;
    cc.seed = seed;
    cc.variants = vs;
    cc.fusion_variants = fv;
    PipelineConfig pc;
    pc.train = train.resolve(seed);
    pc.coverage_threshold = coverage;
    pc.confidence_threshold = threshold;
    const auto curve = label_efficiency_curve(corpus, split.train, split.test, cc, pc, backend_factory(backend, corpus));
    std::ostringstream canon;
    canon << describe(pc) << ";backend=" << backend << ";holdout=" << holdout << ";reps=" << repetitions
          << ";divisor=" << corpus.grid_config.divisor << ";overlap=" << format_fixed(corpus.grid_config.overlap_fraction)
          << ";sizes=";
    for (auto n : cc.train_sizes) canon << n << ' ';
    canon << ";variants=";
    for (auto v : vs) canon << to_string(v) << ' ';
    canon << ";fusion=";
    for (auto v : fv) canon << to_string(v) << ' ';
    emit(out, curve_csv(curve, seed, config_hash(canon.str())), out_stream);
    return kExitOk;
  }
};

struct ServeCmd {
  std::string data, prototypes, store;
  ServiceConfig service;
  GridOptions grid;

  int run(std::ostream& out_stream) const {
    require(!data.empty(), "--data");
    auto manifest = load_manifest(fs::path(data) / "manifest.json");
    auto protos = read_prototypes(prototypes.empty() ? fs::path(data) / "prototypes.json" : fs::path(prototypes));
    const auto store_path = resolve_store_path(store.empty() ? fs::path(data) / "labels.jsonl" : fs::path(store));
    {
      std::ofstream probe(store_path, std::ios::app);
      if (!probe) fail(ErrorCode::kIo, "label store not writable: " + store_path.string());
    }
    AnnotationService svc(std::move(manifest), grid.resolve(data), std::move(protos), store_path);
    out_stream << "serving on http://" << service.host << ':' << service.port << " (store " << store_path.string()
               << ")" << std::endl;
    run_service(svc, service);
    return kExitOk;
  }
};

struct BackendCmd {
  std::string data, part, kind = "oracle", host = "127.0.0.1";
  int port = -1;
  GridOptions grid;

  int run(std::ostream& out_stream) const {
    std::map<std::string, BinaryGrid> truth;
    if (kind == "oracle") {
      require(!data.empty(), "--data");
      require(!part.empty(), "--part");
      const auto manifest = load_manifest(fs::path(data) / "manifest.json");
      if (!manifest.has_class(part)) fail(ErrorCode::kNotFound, "unknown part '" + part + "'");
      for (const auto& img : manifest.images) truth.emplace(img.id, load_ground_truth(img, part));
    } else if (kind != "boxfill") {
      fail(ErrorCode::kInvalidArgument, "--kind must be oracle or boxfill");
    }
    auto backend = make_backend(kind, std::move(truth));
    if (port < 0) {
      serve_stream(*backend, std::cin, out_stream);
      return kExitOk;
    }
    httplib::Server server;
    exclusive_port(server);
    mount_backend(*backend, server);
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
    out_stream << "listening on http://" << host << ':' << bound << "/segment" << std::endl;
    server.listen_after_bind();
    return kExitOk;
  }
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kNotFound:
    case ErrorCode::kFormat:
      return kExitInput;
    case ErrorCode::kIo:
    case ErrorCode::kProtocol:
      return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"partguide: prototype-based patch guidance for part segmentation", "partguide"};
  app.set_version_flag("--version", "partguide 0.1.0");
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 runtime failure (I/O, backend), 2 usage error, 3 missing or malformed input.\n"
      "PARTGUIDE_STORE overrides the label store path.");

  GridCmd grid_cmd;
  auto* grid = app.add_subcommand("grid", "Print the patch grid of every manifest image as JSON");
  grid->add_option("--manifest", grid_cmd.manifest, "manifest.json");
  grid->add_option("--out", grid_cmd.out, "output file (default stdout)");
  grid_cmd.grid.add(grid);

  SynthCmd synth_cmd;
  auto* synth = app.add_subcommand("synth", "Write a synthetic geometric benchmark dataset");
  synth->add_option("--out", synth_cmd.out, "output directory");
  synth->add_option("--images", synth_cmd.cfg.images, "number of images")->capture_default_str();
  synth->add_option("--width", synth_cmd.cfg.width, "image width")->capture_default_str();
  synth->add_option("--height", synth_cmd.cfg.height, "image height")->capture_default_str();
  synth->add_option("--divisor", synth_cmd.cfg.grid.divisor, "grid divisor")->capture_default_str();
  synth->add_option("--overlap", synth_cmd.cfg.grid.overlap_fraction, "grid overlap")->capture_default_str();
  synth->add_option("--noise-dims", synth_cmd.cfg.noise_dims, "pure-noise feature dimensions")->capture_default_str();
  synth->add_option("--signal-noise", synth_cmd.cfg.signal_noise, "noise on coverage features")->capture_default_str();
  synth->add_option("--distractor-noise", synth_cmd.cfg.distractor_noise, "scale of noise dimensions")
      ->capture_default_str();
  synth->add_option("--seed", synth_cmd.cfg.seed, "random seed")->capture_default_str();

  PrototypesCmd proto_cmd;
  auto* proto = app.add_subcommand("prototypes", "Cluster patch features into scored prototypes");
  proto->add_option("--data", proto_cmd.data, "dataset directory");
  proto->add_option("--scores", proto_cmd.scores, "similarity CSV (default <data>/scores.csv)");
  proto->add_option("--out", proto_cmd.out, "output (default <data>/prototypes.json)");
  proto->add_option("--k", proto_cmd.cluster.k, "number of prototypes")->capture_default_str();
  proto->add_option("--iterations", proto_cmd.cluster.max_iterations, "k-means iterations")->capture_default_str();
  proto->add_option("--seed", proto_cmd.cluster.seed, "random seed")->capture_default_str();
  proto->add_option("--report-k", proto_cmd.report_k, "print precision@k of both retrieval orders");
  proto->add_option("--coverage", proto_cmd.coverage, "patch label coverage threshold")->capture_default_str();
  proto_cmd.grid.add(proto);

  AnnotateSimCmd ann_cmd;
  auto* ann = app.add_subcommand("annotate-sim", "Annotate ranked prototypes from ground truth");
  ann->add_option("--data", ann_cmd.data, "dataset directory");
  ann->add_option("--prototypes", ann_cmd.prototypes, "prototypes file (default <data>/prototypes.json)");
  ann->add_option("--store", ann_cmd.store, "label store (default <data>/labels.jsonl)");
  ann->add_option("--part", ann_cmd.parts, "part class (repeatable; default all)");
  ann->add_option("--limit", ann_cmd.limit, "annotate only the top N prototypes per part");
  ann->add_option("--coverage", ann_cmd.coverage, "patch label coverage threshold")->capture_default_str();
  ann->add_option("--report", ann_cmd.report, "cost comparison CSV (default stdout)");
  ann_cmd.grid.add(ann);

  TrainCmd train_cmd;
  auto* tr = app.add_subcommand("train", "Train guidance classifiers");
  tr->add_option("--data", train_cmd.data, "dataset directory");
  tr->add_option("--part", train_cmd.parts, "part class (repeatable; default all)");
  tr->add_option("--images", train_cmd.images, "training images drawn from the pool (default all)");
  tr->add_option("--holdout", train_cmd.holdout, "last N manifest images are never trained on");
  tr->add_option("--seed", train_cmd.seed, "random seed")->capture_default_str();
  tr->add_option("--labels", train_cmd.labels, "train on annotation records instead of mask coverage");
  tr->add_option("--prototypes", train_cmd.prototypes, "prototypes file for --labels");
  tr->add_option("--coverage", train_cmd.coverage, "patch label coverage threshold")->capture_default_str();
  tr->add_option("--out", train_cmd.out, "model directory (default <data>/models)");
  train_cmd.train.add(tr);
  train_cmd.grid.add(tr);

  InferCmd infer_cmd;
  auto* inf = app.add_subcommand("infer", "Predict part masks with one or more variants");
  inf->add_option("--data", infer_cmd.data, "dataset directory");
  inf->add_option("--models", infer_cmd.models, "model directory (default <data>/models)");
  inf->add_option("--variant", infer_cmd.variants, "variant (repeatable; default all)")->check(variant_validator());
  inf->add_option("--image", infer_cmd.images, "image id (repeatable)");
  inf->add_option("--part", infer_cmd.parts, "part class (repeatable; default all)");
  inf->add_option("--holdout", infer_cmd.holdout, "predict the last N manifest images");
  inf->add_option("--threshold", infer_cmd.threshold, "confidence threshold (strict)")->capture_default_str();
  inf->add_option("--backend", infer_cmd.backend, "oracle | boxfill | cmd:<command> | http://host:port/path")
      ->capture_default_str();
  inf->add_option("--max-in-flight", infer_cmd.max_in_flight, "pipelined backend requests")->capture_default_str();
  inf->add_option("--out", infer_cmd.out, "prediction directory (default <data>/predictions)");
  infer_cmd.grid.add(inf);

  EvalCmd eval_cmd;
  auto* ev = app.add_subcommand("eval", "Score tables, predictions or threshold sweeps");
  ev->add_option("--fixture", eval_cmd.fixture, "score table CSV to summarise");
  ev->add_flag("--fuse", eval_cmd.fuse, "with --fixture: fuse the best variant per part");
  ev->add_option("--candidates", eval_cmd.candidates, "fusion candidates (default ggsam,cgsam,lgsam)")
      ->delimiter(',')
      ->check(variant_validator());
  ev->add_option("--data", eval_cmd.data, "dataset directory");
  ev->add_option("--predictions", eval_cmd.predictions, "prediction directory (default <data>/predictions)");
  ev->add_option("--models", eval_cmd.models, "model directory for --sweep");
  ev->add_option("--sweep", eval_cmd.sweep, "confidence thresholds, e.g. 0.1,0.2,0.3")->delimiter(',');
  ev->add_option("--variant", eval_cmd.variants, "variant filter (repeatable)")->check(variant_validator());
  ev->add_option("--backend", eval_cmd.backend, "backend for --sweep")->capture_default_str();
  ev->add_option("--image", eval_cmd.images, "image id (repeatable)");
  ev->add_option("--part", eval_cmd.parts, "part class (repeatable)");
  ev->add_option("--holdout", eval_cmd.holdout, "evaluate the last N manifest images");
  ev->add_option("--out", eval_cmd.out_csv, "CSV report path");
  ev->add_option("--per-image", eval_cmd.per_image, "per-image IoU counts CSV path");
  eval_cmd.grid.add(ev);

  FuseCmd fuse_cmd;
  auto* fu = app.add_subcommand("fuse", "Best-variant-per-part fusion and the selection experiment");
  fu->add_option("--table", fuse_cmd.table, "score table CSV (full-information fusion)");
  fu->add_option("--per-image", fuse_cmd.per_image, "per-image counts CSV (selection experiment)");
  fu->add_option("--candidates", fuse_cmd.candidates, "variants to choose from (default ggsam,cgsam,lgsam)")
      ->delimiter(',')
      ->check(variant_validator());
  fu->add_option("--sizes", fuse_cmd.sizes, "sample sizes (default 1,2,4,... up to the image count)")
      ->delimiter(',');
  fu->add_option("--reps", fuse_cmd.repetitions, "repetitions per sample size")->capture_default_str();
  fu->add_option("--seed", fuse_cmd.seed, "random seed")->capture_default_str();
  fu->add_option("--out", fuse_cmd.out, "CSV output (default stdout)");

  CurveCmd curve_cmd;
  auto* cu = app.add_subcommand("curve", "Label-efficiency curve over training-set sizes");
  cu->add_option("--data", curve_cmd.data, "dataset directory");
  cu->add_option("--holdout", curve_cmd.holdout, "last N manifest images form the test set");
  cu->add_option("--sizes", curve_cmd.sizes, "training sizes (default 1,2,4,... up to the pool)")->delimiter(',');
  cu->add_option("--reps", curve_cmd.repetitions, "repetitions")->capture_default_str();
  cu->add_option("--seed", curve_cmd.seed, "random seed")->capture_default_str();
  cu->add_option("--variant", curve_cmd.variants, "variant (repeatable; default all)")->check(variant_validator());
  cu->add_option("--fusion", curve_cmd.fusion, "fusion candidates (default ggsam,cgsam,lgsam)")
      ->delimiter(',')
      ->check(variant_validator());
  cu->add_option("--backend", curve_cmd.backend, "segmentation backend")->capture_default_str();
  cu->add_option("--threshold", curve_cmd.threshold, "confidence threshold (strict)")->capture_default_str();
  cu->add_option("--coverage", curve_cmd.coverage, "patch label coverage threshold")->capture_default_str();
  cu->add_option("--out", curve_cmd.out, "CSV output (default stdout)");
  curve_cmd.train.add(cu);
  curve_cmd.grid.add(cu);

  ServeCmd serve_cmd;
  auto* sv = app.add_subcommand("serve", "Serve the annotation HTTP API");
  sv->add_option("--data", serve_cmd.data, "dataset directory");
  sv->add_option("--prototypes", serve_cmd.prototypes, "prototypes file (default <data>/prototypes.json)");
  sv->add_option("--store", serve_cmd.store, "label store (default <data>/labels.jsonl)");
  sv->add_option("--host", serve_cmd.service.host, "bind address")->capture_default_str();
  sv->add_option("--port", serve_cmd.service.port, "port")->capture_default_str();
  serve_cmd.grid.add(sv);

  BackendCmd backend_cmd;
  auto* be = app.add_subcommand("backend", "Run a reference segmentation backend (stdio or HTTP)");
  be->add_option("--kind", backend_cmd.kind, "oracle | boxfill")->capture_default_str();
  be->add_option("--data", backend_cmd.data, "dataset directory (oracle)");
  be->add_option("--part", backend_cmd.part, "part class (oracle)");
  be->add_option("--port", backend_cmd.port, "serve HTTP on this port (0 = any); default JSON lines on stdio");
  be->add_option("--host", backend_cmd.host, "bind address")->capture_default_str();

  auto* spec = app.add_subcommand("export-features-spec", "Print the GSFV feature file layout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*grid) return grid_cmd.run(out);
    if (*synth) return synth_cmd.run(out);
    if (*proto) return proto_cmd.run(out);
    if (*ann) return ann_cmd.run(out);
    if (*tr) return train_cmd.run(out, err);
    if (*inf) return infer_cmd.run(out, err);
    if (*ev) return eval_cmd.run(out);
    if (*fu) return fuse_cmd.run(out);
    if (*cu) return curve_cmd.run(out);
    if (*sv) return serve_cmd.run(out);
    if (*be) return backend_cmd.run(out);
    if (*spec) {
      out << feature_format_description();
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "partguide: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "partguide: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "partguide: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace partguide
