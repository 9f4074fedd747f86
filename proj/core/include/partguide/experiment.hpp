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

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "partguide/classifier.hpp"
#include "partguide/corpus.hpp"
#include "partguide/evaluation.hpp"
#include "partguide/guidance.hpp"
#include "partguide/prototypes.hpp"
#include "partguide/segmentation.hpp"

namespace partguide {

struct PipelineConfig {
  TrainConfig train;
  double coverage_threshold = 0.25;
  double confidence_threshold = 0.5;
  std::size_t max_in_flight = 4;
};

/// Pooled patches of `images`, labelled by ground-truth coverage.
TrainingSet build_training_set(const Corpus& corpus, std::span<const std::size_t> images,
                               const std::string& part_class, double coverage_threshold);

/// Ground-truth patch labels of every corpus patch for one class.
std::map<PatchKey, bool> ground_truth_patch_labels(const Corpus& corpus, const std::string& part_class,
                                                   double coverage_threshold);

/// Patches of `images` labelled through annotation records of `part_class`.
/// Patches of unannotated prototypes are left out.
TrainingSet build_training_set_from_records(const Corpus& corpus, std::span<const std::size_t> images,
                                            std::span<const Prototype> prototypes,
                                            std::span<const AnnotationRecord> records,
                                            const std::string& part_class);

/// One model per class; nullopt when the training images hold only one label
/// for that class (such a class predicts nothing).
using ModelSet = std::map<std::string, std::optional<GuidanceModel>>;

ModelSet train_models(const Corpus& corpus, std::span<const std::size_t> images, const PipelineConfig& config);

/// Confidence of every patch of one image.
std::vector<double> image_confidences(const Corpus& corpus, const CorpusImage& image, const GuidanceModel& model);

/// Predicted mask of one (image, class, variant).
ImagePrediction predict_image(const Corpus& corpus, const CorpusImage& image, const std::string& part_class,
                              const std::optional<GuidanceModel>& model, Variant variant,
                              SegmentationBackend& backend, const PipelineConfig& config);

/// IoU counts for every (image, class, variant) over `images`.
PerImageScores evaluate_variants(const Corpus& corpus, const ModelSet& models, std::span<const std::size_t> images,
                                 std::span<const Variant> variants, SegmentationBackend& backend,
                                 const PipelineConfig& config);

/// Ground truth of every image for `part_class`, keyed by image id.
std::map<std::string, BinaryGrid> ground_truth_by_image(const Corpus& corpus, const std::string& part_class);

using BackendFactory = std::function<std::unique_ptr<SegmentationBackend>(const std::string& part_class)>;

/// Backend factory that answers with ground truth clipped to the ROI.
BackendFactory oracle_backend_factory(const Corpus& corpus);

/// Evaluation routed through one backend per class.
PerImageScores evaluate_variants(const Corpus& corpus, const ModelSet& models, std::span<const std::size_t> images,
                                 std::span<const Variant> variants, const BackendFactory& backends,
                                 const PipelineConfig& config);

struct CurveSeries {
  std::string name;               // variant string or "fused"
  std::vector<double> values;     // one per repetition
  double mean = 0.0;
  double standard_error = 0.0;
};

struct CurvePoint {
  std::size_t train_size = 0;
  std::vector<CurveSeries> series;  // declared variant order, then "fused"
  const CurveSeries& at(std::string_view name) const;
};

struct CurveConfig {
  std::vector<std::size_t> train_sizes = {1, 2, 4, 8, 16, 32, 64};
  std::size_t repetitions = 3;
  std::uint64_t seed = 7;
  std::vector<Variant> variants;        // empty = all
  std::vector<Variant> fusion_variants;  // empty = the ROI variants
};

/// For each repetition r (seed + r) the training pool is shuffled once and
/// each size trains on a prefix of it, so training sets are nested. Every
/// variant is scored on `test_images` as the mean over classes of pooled
/// IoU. The fused series picks, per class, the fusion variant with the best
/// pooled IoU on the training images themselves.
std::vector<CurvePoint> label_efficiency_curve(const Corpus& corpus, std::span<const std::size_t> train_pool,
                                               std::span<const std::size_t> test_images,
                                               const CurveConfig& curve, const PipelineConfig& config,
                                               const BackendFactory& backends);

/// CSV: `# seed=<s> config=<hash>` then `train_size,series,mean,stderr,repetitions`.
std::string curve_csv(const std::vector<CurvePoint>& curve, std::uint64_t seed, std::string_view config_hash);

/// Mean over classes of the pooled IoU of `variant` over `images`.
double mean_pooled_iou(const PerImageScores& scores, std::span<const std::size_t> images, std::size_t variant);

/// 16 hex digits of FNV-1a over `canonical`.
std::string config_hash(std::string_view canonical);

/// Canonical text of a pipeline configuration (input to config_hash).
std::string describe(const PipelineConfig& config);

}  // namespace partguide
