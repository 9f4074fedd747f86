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
#include <span>
#include <string>
#include <vector>

#include "partguide/dataset.hpp"
#include "partguide/features.hpp"
#include "partguide/mask.hpp"
#include "partguide/patchgrid.hpp"

namespace partguide {

/// One image with its patch grid and decoded ground truth.
struct CorpusImage {
  std::string id;
  int width = 0;
  int height = 0;
  PatchGrid grid;
  std::map<std::string, BinaryGrid> ground_truth;  // every corpus class, possibly empty
  std::vector<std::size_t> feature_rows;            // feature row per patch index
};

/// Everything the pipeline needs in memory.
struct Corpus {
  std::string dataset_id;
  std::vector<std::string> part_classes;
  std::vector<CorpusImage> images;
  FeatureBlob features;
  GridConfig grid_config;

  std::size_t index_of(const std::string& image_id) const;
  std::span<const float> feature(const CorpusImage& image, int patch_index) const {
    return features.row(image.feature_rows.at(static_cast<std::size_t>(patch_index)));
  }
};

/// Builds grids, decodes masks and checks that `features` covers every patch.
Corpus load_corpus(const Manifest& manifest, FeatureBlob features, const GridConfig& grid_config);

/// Loads `<dir>/manifest.json` and `<dir>/features.gsfv`.
Corpus load_corpus_dir(const std::filesystem::path& dir, const GridConfig& grid_config);

/// Geometric toy benchmark: every image holds up to one disc, one bar and one
/// diamond; patch features are per-class coverage plus Gaussian noise, padded
/// with pure-noise dimensions.
struct SyntheticConfig {
  std::size_t images = 80;
  int width = 48;
  int height = 48;
  GridConfig grid{6, 0.5};
  std::size_t noise_dims = 5;
  double signal_noise = 0.15;
  double distractor_noise = 0.5;
  double presence = 0.9;
  std::uint64_t seed = 7;
};

Corpus make_synthetic_corpus(const SyntheticConfig& config);

/// Noisy stand-in for text-image similarity: a monotone function of class
/// coverage plus noise, clamped to [-1, 1].
SimilarityScores synthetic_similarity(const Corpus& corpus, std::uint64_t seed);

/// Writes manifest.json, masks/<image>_<class>.json, features.gsfv and
/// scores.csv under `dir`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const SimilarityScores& scores);

}  // namespace partguide
