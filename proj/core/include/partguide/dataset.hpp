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

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partguide/features.hpp"
#include "partguide/mask.hpp"

namespace partguide {

/// Raw class name -> merged class name. Names absent from the table map to
/// themselves.
class MergeTable {
 public:
  MergeTable() = default;
  /// Throws if a target is itself remapped to something else, which would
  /// make merging non-idempotent.
  explicit MergeTable(std::map<std::string, std::string> mapping);

  const std::string& apply(const std::string& raw) const;
  const std::map<std::string, std::string>& mapping() const { return mapping_; }

 private:
  std::map<std::string, std::string> mapping_;
};

struct ImageEntry {
  std::string id;
  int width = 0;
  int height = 0;
  /// Opaque; passed through to the UI and external backends.
  std::string pixel_source;
  /// Merged class -> mask sidecars (absolute). Several raw classes may merge
  /// into one, in which case the ground truth is their union.
  std::map<std::string, std::vector<std::filesystem::path>> mask_sources;
};

struct Manifest {
  std::string dataset_id;
  std::vector<ImageEntry> images;
  /// Merged class names in first-occurrence order.
  std::vector<std::string> part_classes;
  MergeTable merge_table;
  std::filesystem::path root;

  const ImageEntry& image(const std::string& id) const;
  bool has_class(const std::string& part_class) const;
};

/// Loads and validates a manifest JSON file. Relative paths resolve against
/// the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(const std::string& json_text, const std::filesystem::path& root = {});

/// Inverse of load_manifest for already-merged manifests (merge table kept).
std::string manifest_to_json(const Manifest& manifest);

/// Union of the image's sidecars for `part_class`; an all-false grid when
/// the image has none. Throws when a sidecar's size disagrees with the image.
BinaryGrid load_ground_truth(const ImageEntry& image, const std::string& part_class);

/// Imported text-similarity scores keyed by (patch, merged class).
class SimilarityScores {
 public:
  /// Later values for the same key keep the maximum (raw classes that merge
  /// into one class collapse to their best score).
  void add(const PatchKey& key, const std::string& part_class, double score);

  std::optional<double> get(const PatchKey& key, const std::string& part_class) const;
  std::vector<std::string> classes() const;
  std::size_t size() const { return scores_.size(); }
  const std::map<std::pair<PatchKey, std::string>, double>& entries() const { return scores_; }

  /// Throws Error(kNotFound) naming the first score whose patch is not in `known`.
  void require_patches(std::span<const PatchKey> known) const;

 private:
  std::map<std::pair<PatchKey, std::string>, double> scores_;
};

/// CSV with header `image_id,patch_index,part_class,score`; scores in [-1, 1].
SimilarityScores load_similarity_scores(const std::filesystem::path& path,
                                        const MergeTable& merge = {});
void write_similarity_scores(const std::filesystem::path& path, const SimilarityScores& scores);

}  // namespace partguide
