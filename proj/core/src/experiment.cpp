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

#include "partguide/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "partguide/error.hpp"
#include "partguide/rng.hpp"

namespace partguide {

TrainingSet build_training_set(const Corpus& corpus, std::span<const std::size_t> images,
                               const std::string& part_class, double coverage_threshold) {
  TrainingSet set;
  set.dim = corpus.features.dim();
  for (auto i : images) {
    const auto& img = corpus.images.at(i);
    const auto labels = label_patches(img.grid, img.ground_truth.at(part_class), part_class, coverage_threshold);
    for (const auto& lp : labels) set.add(corpus.feature(img, lp.patch.index), lp.label);
  }
  return set;
}

std::map<PatchKey, bool> ground_truth_patch_labels(const Corpus& corpus, const std::string& part_class,
                                                   double coverage_threshold) {
  std::map<PatchKey, bool> out;
  for (const auto& img : corpus.images) {
    for (const auto& lp : label_patches(img.grid, img.ground_truth.at(part_class), part_class, coverage_threshold)) {
      out.emplace(PatchKey{img.id, lp.patch.index}, lp.label);
    }
  }
  return out;
}

TrainingSet build_training_set_from_records(const Corpus& corpus, std::span<const std::size_t> images,
                                            std::span<const Prototype> prototypes,
                                            std::span<const AnnotationRecord> records,
                                            const std::string& part_class) {
  std::map<int, const Prototype*> by_id;
  for (const auto& p : prototypes) by_id[p.id] = &p;
  std::map<PatchKey, bool> labels;
  for (const auto& r : records) {
    if (r.part_class != part_class) continue;
    const auto it = by_id.find(r.prototype_id);
    if (it == by_id.end()) {
      fail(ErrorCode::kNotFound, "record refers to unknown prototype " + std::to_string(r.prototype_id));
    }
    for (const auto& [key, label] : expand_record(*it->second, r)) labels[key] = label;
  }
  TrainingSet set;
  set.dim = corpus.features.dim();
  for (auto i : images) {
    const auto& img = corpus.images.at(i);
    for (const auto& p : img.grid.patches) {
      const auto it = labels.find({img.id, p.index});
      if (it != labels.end()) set.add(corpus.feature(img, p.index), it->second);
    }
  }
  return set;
}

ModelSet train_models(const Corpus& corpus, std::span<const std::size_t> images, const PipelineConfig& config) {
  ModelSet models;
  for (const auto& cls : corpus.part_classes) {
    const auto set = build_training_set(corpus, images, cls, config.coverage_threshold);
    const auto positives = std::count(set.labels.begin(), set.labels.end(), 1);
    if (positives == 0 || static_cast<std::size_t>(positives) == set.size()) {
      models[cls] = std::nullopt;
      continue;
    }
    models[cls] = train(set, cls, config.train);
  }
  return models;
}

std::vector<double> image_confidences(const Corpus& corpus, const CorpusImage& image, const GuidanceModel& model) {
  std::vector<double> conf;
  conf.reserve(image.grid.size());
  for (const auto& p : image.grid.patches) conf.push_back(model.predict(corpus.feature(image, p.index)));
  return conf;
}

ImagePrediction predict_image(const Corpus& corpus, const CorpusImage& image, const std::string& part_class,
                              const std::optional<GuidanceModel>& model, Variant variant,
                              SegmentationBackend& backend, const PipelineConfig& config) {
  if (!model) return {BinaryGrid(image.width, image.height), {}, {}};
  const auto conf = image_confidences(corpus, image, *model);
  const auto regions = guide(image.grid, conf, variant, config.confidence_threshold, part_class);
  return segment_regions(image.id, image.width, image.height, regions, variant, backend, config.max_in_flight);
}

namespace {

std::vector<std::string> variant_names(std::span<const Variant> variants) {
  std::vector<std::string> out;
  for (auto v : variants) out.push_back(to_string(v));
  return out;
}

PerImageScores evaluate_with(const Corpus& corpus, const ModelSet& models, std::span<const std::size_t> images,
                             std::span<const Variant> variants, const PipelineConfig& config,
                             const std::function<SegmentationBackend&(std::size_t part)>& backend_for) {
  std::vector<std::string> ids;
  for (auto i : images) ids.push_back(corpus.images.at(i).id);
  PerImageScores scores(ids, corpus.part_classes, variant_names(variants));
  // Confidences depend only on (image, class); compute once for all variants.
  for (std::size_t p = 0; p < corpus.part_classes.size(); ++p) {
    const auto& cls = corpus.part_classes[p];
    const auto& model = models.at(cls);
    auto& backend = backend_for(p);
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto& img = corpus.images[images[k]];
      const auto& gt = img.ground_truth.at(cls);
      if (!model) {
        for (std::size_t v = 0; v < variants.size(); ++v) {
          scores.at(k, p, v) = iou_counts(BinaryGrid(img.width, img.height), gt);
        }
        continue;
      }
      const auto conf = image_confidences(corpus, img, *model);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        const auto regions = guide(img.grid, conf, variants[v], config.confidence_threshold, cls);
        const auto pred =
            segment_regions(img.id, img.width, img.height, regions, variants[v], backend, config.max_in_flight);
        scores.at(k, p, v) = iou_counts(pred.mask, gt);
      }
    }
  }
  return scores;
}

}  // namespace

PerImageScores evaluate_variants(const Corpus& corpus, const ModelSet& models, std::span<const std::size_t> images,
                                 std::span<const Variant> variants, SegmentationBackend& backend,
                                 const PipelineConfig& config) {
  return evaluate_with(corpus, models, images, variants, config,
                       [&](std::size_t) -> SegmentationBackend& { return backend; });
}

PerImageScores evaluate_variants(const Corpus& corpus, const ModelSet& models, std::span<const std::size_t> images,
                                 std::span<const Variant> variants, const BackendFactory& backends,
                                 const PipelineConfig& config) {
  std::vector<std::unique_ptr<SegmentationBackend>> owned;
  for (const auto& cls : corpus.part_classes) owned.push_back(backends(cls));
  return evaluate_with(corpus, models, images, variants, config,
                       [&](std::size_t p) -> SegmentationBackend& { return *owned[p]; });
}

std::map<std::string, BinaryGrid> ground_truth_by_image(const Corpus& corpus, const std::string& part_class) {
  std::map<std::string, BinaryGrid> out;
  for (const auto& img : corpus.images) out.emplace(img.id, img.ground_truth.at(part_class));
  return out;
}

BackendFactory oracle_backend_factory(const Corpus& corpus) {
  return [&corpus](const std::string& part_class) -> std::unique_ptr<SegmentationBackend> {
    return std::make_unique<OracleBackend>(ground_truth_by_image(corpus, part_class));
  };
}

double mean_pooled_iou(const PerImageScores& scores, std::span<const std::size_t> images, std::size_t variant) {
  double sum = 0.0;
  for (std::size_t p = 0; p < scores.parts().size(); ++p) sum += scores.pooled(images, p, variant);
  return sum / static_cast<double>(scores.parts().size());
}

const CurveSeries& CurvePoint::at(std::string_view name) const {
  for (const auto& s : series) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::kNotFound, "curve has no series '" + std::string(name) + "'");
}

std::vector<CurvePoint> label_efficiency_curve(const Corpus& corpus, std::span<const std::size_t> train_pool,
                                               std::span<const std::size_t> test_images,
                                               const CurveConfig& curve, const PipelineConfig& config,
                                               const BackendFactory& backends) {
  if (curve.train_sizes.empty()) fail(ErrorCode::kInvalidArgument, "no training sizes");
  if (curve.repetitions == 0) fail(ErrorCode::kInvalidArgument, "repetitions must be >= 1");
  if (test_images.empty()) fail(ErrorCode::kInvalidArgument, "no held-out images");
  for (auto n : curve.train_sizes) {
    if (n == 0) fail(ErrorCode::kInvalidArgument, "training size must be >= 1");
    if (n > train_pool.size()) {
      fail(ErrorCode::kInvalidArgument, "insufficient images: size " + std::to_string(n) + " but pool has " +
                                            std::to_string(train_pool.size()));
    }
  }
  const std::vector<Variant> variants =
      curve.variants.empty() ? std::vector<Variant>(all_variants().begin(), all_variants().end()) : curve.variants;
  const std::vector<Variant> fusion = curve.fusion_variants.empty()
                                          ? std::vector<Variant>(roi_variants().begin(), roi_variants().end())
                                          : curve.fusion_variants;
  // Test-time variant list: requested variants followed by any fusion-only ones.
  std::vector<Variant> scored = variants;
  for (auto v : fusion) {
    if (std::find(scored.begin(), scored.end(), v) == scored.end()) scored.push_back(v);
  }
  std::vector<std::size_t> fusion_pos;
  for (auto v : fusion) {
    fusion_pos.push_back(static_cast<std::size_t>(std::find(scored.begin(), scored.end(), v) - scored.begin()));
  }

  std::vector<CurvePoint> points(curve.train_sizes.size());
  for (std::size_t s = 0; s < points.size(); ++s) {
    points[s].train_size = curve.train_sizes[s];
    for (auto v : variants) points[s].series.push_back({to_string(v), {}, 0.0, 0.0});
    points[s].series.push_back({"fused", {}, 0.0, 0.0});
  }

  std::vector<std::size_t> test_local(test_images.size());
  std::iota(test_local.begin(), test_local.end(), std::size_t{0});

  for (std::size_t r = 0; r < curve.repetitions; ++r) {
    std::vector<std::size_t> order(train_pool.begin(), train_pool.end());
    Rng rng(curve.seed + r);
    rng.shuffle(std::span(order));
    PipelineConfig rep_config = config;
    rep_config.train.seed = curve.seed + r;
    for (std::size_t s = 0; s < points.size(); ++s) {
      const std::span<const std::size_t> train_images(order.data(), curve.train_sizes[s]);
      const auto models = train_models(corpus, train_images, rep_config);
      const auto test = evaluate_variants(corpus, models, test_images, scored, backends, rep_config);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        points[s].series[v].values.push_back(mean_pooled_iou(test, test_local, v));
      }
      const auto train_scores = evaluate_variants(corpus, models, train_images, fusion, backends, rep_config);
      std::vector<std::size_t> train_local(train_images.size());
      std::iota(train_local.begin(), train_local.end(), std::size_t{0});
      const auto picks = train_scores.select(train_local);
      double fused = 0.0;
      for (std::size_t p = 0; p < corpus.part_classes.size(); ++p) {
        fused += test.pooled(test_local, p, fusion_pos[picks[p]]);
      }
      points[s].series.back().values.push_back(fused / static_cast<double>(corpus.part_classes.size()));
    }
  }

  for (auto& pt : points) {
    for (auto& series : pt.series) {
      const double n = static_cast<double>(series.values.size());
      series.mean = std::accumulate(series.values.begin(), series.values.end(), 0.0) / n;
      double ss = 0.0;
      for (double x : series.values) ss += (x - series.mean) * (x - series.mean);
      series.standard_error = series.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
    }
  }
  return points;
}

std::string curve_csv(const std::vector<CurvePoint>& curve, std::uint64_t seed, std::string_view config_hash) {
  std::ostringstream out;
  out << "# seed=" << seed << " config=" << config_hash << '\n';
  out << "train_size,series,mean,stderr,repetitions\n";
  for (const auto& pt : curve) {
    for (const auto& s : pt.series) {
      out << pt.train_size << ',' << s.name << ',' << format_fixed(s.mean) << ',' << format_fixed(s.standard_error)
          << ',' << s.values.size() << '\n';
    }
  }
  return out.str();
}

std::string config_hash(std::string_view canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string describe(const PipelineConfig& config) {
  std::ostringstream out;
  out << "C=" << format_fixed(config.train.C) << ";gamma="
      << (config.train.gamma ? format_fixed(*config.train.gamma) : std::string("auto"))
      << ";tol=" << format_fixed(config.train.tolerance) << ";max_passes=" << config.train.max_passes
      << ";balance=" << (config.train.balance_classes ? 1 : 0)
      << ";coverage=" << format_fixed(config.coverage_threshold)
      << ";threshold=" << format_fixed(config.confidence_threshold);
  return out.str();
}

}  // namespace partguide
