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
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "partguide/dataset.hpp"
#include "partguide/features.hpp"
#include "partguide/mask.hpp"

namespace partguide {

/// A cluster of visually similar patches.
struct Prototype {
  int id = 0;
  /// Unit-length mean of the members' normalized features.
  std::vector<double> centroid;
  std::vector<PatchKey> members;
  /// Mean member similarity per part class.
  std::map<std::string, double> score_per_class;
};

struct ClusterConfig {
  int k = 128;
  int max_iterations = 25;
  /// Stop once the largest centroid shift, relative to the largest centroid
  /// norm, drops below this.
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

/// Seeded k-means (k-means++ initialisation) over L2-normalised rows.
/// Every prototype is non-empty and every row belongs to exactly one
/// prototype, the nearest centroid.
std::vector<Prototype> cluster_prototypes(const FeatureBlob& features, const ClusterConfig& config);

/// Fills score_per_class with member means. A class is scored only when all
/// members of every prototype have a score for it; partial coverage throws.
void score_prototypes(std::span<Prototype> prototypes, const SimilarityScores& scores);

/// Positions into `prototypes`, by descending class score, ties by id.
std::vector<std::size_t> rank_prototypes(std::span<const Prototype> prototypes,
                                         const std::string& part_class);

enum class LabelSource { kSimulated, kHuman };

std::string to_string(LabelSource source);
LabelSource parse_label_source(const std::string& text);

/// One verified prototype: a bulk label plus per-member exceptions.
struct AnnotationRecord {
  int prototype_id = 0;
  std::string part_class;
  bool bulk_label = false;
  /// Positions into Prototype::members whose label is the opposite of bulk.
  std::vector<int> exceptions;
  int clicks = 1;
  LabelSource source = LabelSource::kSimulated;
  std::string annotator;
  std::string timestamp;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// 1 + number of exceptions.
int click_count(std::size_t exception_count);

/// Bulk label = majority (positive on a tie), exceptions = minority members,
/// clicks = 1 + min(#pos, #neg).
AnnotationRecord simulate_annotation(const Prototype& prototype,
                                     const std::map<PatchKey, bool>& ground_truth,
                                     const std::string& part_class);

/// Validates a record against its prototype and recomputes clicks. Throws
/// on out-of-range or duplicate exceptions.
AnnotationRecord normalize_record(const Prototype& prototype, AnnotationRecord record);

/// Per-member labels implied by a record.
std::vector<std::pair<PatchKey, bool>> expand_record(const Prototype& prototype,
                                                     const AnnotationRecord& record);

struct RetrievalPrecision {
  double raw_patch = 0.0;
  double prototype = 0.0;
};

/// Precision@k of two retrieval orders over the same patch universe:
/// patches by their own score (ties by key), and members of prototypes in
/// prototype rank order (members in stored order).
RetrievalPrecision retrieval_efficacy(std::span<const Prototype> prototypes,
                                      const SimilarityScores& scores,
                                      const std::string& part_class,
                                      const std::set<PatchKey>& positives, std::size_t k);

struct ClassCost {
  std::string part_class;
  std::size_t images = 0;
  std::int64_t patch_clicks = 0;
  std::int64_t polygon_clicks = 0;
  double patch_per_image = 0.0;
  double polygon_per_image = 0.0;
  /// polygon_per_image / patch_per_image.
  double ratio = 0.0;
  bool approximate = false;
};

struct PolygonCost {
  /// Vertex count per annotated image (one entry per image of the set).
  std::vector<std::int64_t> vertices_per_image;
  /// Counts came from mask contours, not real polygons.
  bool approximate = false;
};

/// Mean clicks per image for prototype annotation vs polygon drawing.
std::vector<ClassCost> annotation_cost_comparison(std::span<const AnnotationRecord> records,
                                                  const std::map<std::string, PolygonCost>& polygons);

/// Vertices of the rectilinear outline(s) of a raster mask: every pixel
/// corner where the boundary turns. Stand-in for polygon vertex counts when
/// only masks exist.
std::int64_t approximate_polygon_vertices(const BinaryGrid& mask);

std::string prototypes_to_json(std::span<const Prototype> prototypes, const ClusterConfig& config);
std::vector<Prototype> prototypes_from_json(const std::string& text);
std::vector<Prototype> read_prototypes(const std::filesystem::path& path);

}  // namespace partguide
