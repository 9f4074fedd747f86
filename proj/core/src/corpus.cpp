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

#include "partguide/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "io.hpp"
#include "partguide/error.hpp"
#include "partguide/rng.hpp"

namespace partguide {

std::size_t Corpus::index_of(const std::string& image_id) const {
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].id == image_id) return i;
  }
  fail(ErrorCode::kNotFound, "corpus has no image '" + image_id + "'");
}

Corpus load_corpus(const Manifest& manifest, FeatureBlob features, const GridConfig& grid_config) {
  Corpus corpus;
  corpus.dataset_id = manifest.dataset_id;
  corpus.part_classes = manifest.part_classes;
  corpus.grid_config = grid_config;
  for (const auto& entry : manifest.images) {
    CorpusImage img;
    img.id = entry.id;
    img.width = entry.width;
    img.height = entry.height;
    img.grid = build_grid(entry.id, entry.width, entry.height, grid_config);
    for (const auto& cls : manifest.part_classes) img.ground_truth.emplace(cls, load_ground_truth(entry, cls));
    for (const auto& key : img.grid.keys()) {
      const auto row = features.find(key);
      if (!row) {
        fail(ErrorCode::kNotFound, "features missing for patch " + std::to_string(key.patch_index) + " of image '" +
                                       key.image_id + "'");
      }
      img.feature_rows.push_back(*row);
    }
    corpus.images.push_back(std::move(img));
  }
  corpus.features = std::move(features);
  return corpus;
}

Corpus load_corpus_dir(const std::filesystem::path& dir, const GridConfig& grid_config) {
  return load_corpus(load_manifest(dir / "manifest.json"), read_features(dir / "features.gsfv"), grid_config);
}

namespace {

const std::vector<std::string> kSyntheticClasses = {"disc", "bar", "diamond"};

// Paints one shape; returns its bounding box.
Box paint(BinaryGrid& grid, const std::string& cls, Rng& rng, std::span<const Box> taken) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    int hw = 0, hh = 0;
    if (cls == "disc") {
      hw = hh = 6 + static_cast<int>(rng.below(4));
    } else if (cls == "bar") {
      hw = 10 + static_cast<int>(rng.below(5));
      hh = 3 + static_cast<int>(rng.below(2));
    } else {
      hw = hh = 7 + static_cast<int>(rng.below(4));
    }
    if (2 * hw + 1 > grid.width() || 2 * hh + 1 > grid.height()) continue;
    const int cx = hw + static_cast<int>(rng.below(static_cast<std::uint64_t>(grid.width() - 2 * hw)));
    const int cy = hh + static_cast<int>(rng.below(static_cast<std::uint64_t>(grid.height() - 2 * hh)));
    const Box box{cx - hw, cy - hh, cx + hw + 1, cy + hh + 1};
    const Box margin{box.x0 - 2, box.y0 - 2, box.x1 + 2, box.y1 + 2};
    if (std::any_of(taken.begin(), taken.end(), [&](const Box& b) { return intersection_area(b, margin) > 0; })) {
      continue;
    }
    for (int y = box.y0; y < box.y1; ++y) {
      for (int x = box.x0; x < box.x1; ++x) {
        const int dx = x - cx, dy = y - cy;
        bool on = true;
        if (cls == "disc") on = dx * dx + dy * dy <= hw * hw;
        if (cls == "diamond") on = std::abs(dx) + std::abs(dy) <= hw;
        if (on) grid.set(x, y);
      }
    }
    return box;
  }
  return {};
}

// Grey-level rendering so the annotation service has pixels to serve.
std::string render_pgm(const CorpusImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::string pixels(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), '\x20');
  unsigned char shade = 90;
  for (const auto& [cls, gt] : img.ground_truth) {
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      if (gt.at_index(static_cast<std::int64_t>(i))) pixels[i] = static_cast<char>(shade);
    }
    shade = static_cast<unsigned char>(shade + 60);
  }
  return out + pixels;
}

}  // namespace

Corpus make_synthetic_corpus(const SyntheticConfig& config) {
  if (config.images == 0) fail(ErrorCode::kInvalidArgument, "synthetic corpus needs at least one image");
  Rng rng(config.seed);
  Corpus corpus;
  corpus.dataset_id = "synthetic-" + std::to_string(config.seed);
  corpus.part_classes = kSyntheticClasses;
  corpus.grid_config = config.grid;
  corpus.features = FeatureBlob(kSyntheticClasses.size() + config.noise_dims);

  std::vector<float> row(corpus.features.dim());
  for (std::size_t i = 0; i < config.images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img%04zu", i);
    CorpusImage img;
    img.id = id;
    img.width = config.width;
    img.height = config.height;
    img.grid = build_grid(img.id, img.width, img.height, config.grid);
    std::vector<Box> taken;
    for (const auto& cls : kSyntheticClasses) {
      BinaryGrid gt(img.width, img.height);
      if (rng.uniform() < config.presence) {
        const Box b = paint(gt, cls, rng, taken);
        if (!b.empty()) taken.push_back(b);
      }
      img.ground_truth.emplace(cls, std::move(gt));
    }
    std::vector<IntegralImage> integrals;
    for (const auto& cls : kSyntheticClasses) integrals.emplace_back(img.ground_truth.at(cls));
    for (const auto& patch : img.grid.patches) {
      const double area = static_cast<double>(patch.box.area());
      for (std::size_t c = 0; c < kSyntheticClasses.size(); ++c) {
        const double coverage = static_cast<double>(integrals[c].count(patch.box)) / area;
        row[c] = static_cast<float>(coverage + rng.normal(0.0, config.signal_noise));
      }
      for (std::size_t d = 0; d < config.noise_dims; ++d) {
        row[kSyntheticClasses.size() + d] = static_cast<float>(rng.normal(0.0, config.distractor_noise));
      }
      img.feature_rows.push_back(corpus.features.size());
      corpus.features.add({img.id, patch.index}, row);
    }
    corpus.images.push_back(std::move(img));
  }
  return corpus;
}

SimilarityScores synthetic_similarity(const Corpus& corpus, std::uint64_t seed) {
  Rng rng(seed);
  SimilarityScores scores;
  for (const auto& img : corpus.images) {
    std::vector<IntegralImage> integrals;
    for (const auto& cls : corpus.part_classes) integrals.emplace_back(img.ground_truth.at(cls));
    for (const auto& patch : img.grid.patches) {
      for (std::size_t c = 0; c < corpus.part_classes.size(); ++c) {
        const double coverage =
            static_cast<double>(integrals[c].count(patch.box)) / static_cast<double>(patch.box.area());
        const double s = std::clamp(0.6 * coverage - 0.2 + rng.normal(0.0, 0.1), -1.0, 1.0);
        scores.add({img.id, patch.index}, corpus.part_classes[c], s);
      }
    }
  }
  return scores;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const SimilarityScores& scores) {
  std::filesystem::create_directories(dir / "masks");
  std::filesystem::create_directories(dir / "images");
  Manifest manifest;
  manifest.dataset_id = corpus.dataset_id;
  manifest.part_classes = corpus.part_classes;
  manifest.root = dir;
  for (const auto& img : corpus.images) {
    ImageEntry entry;
    entry.id = img.id;
    entry.width = img.width;
    entry.height = img.height;
    entry.pixel_source = "images/" + img.id + ".pgm";
    detail::write_file_atomic(dir / entry.pixel_source, render_pgm(img));
    for (const auto& [cls, gt] : img.ground_truth) {
      const auto path = dir / "masks" / (img.id + "_" + cls + ".json");
      write_mask_file(path, make_mask(img.id, cls, gt));
      entry.mask_sources[cls].push_back(path);
    }
    manifest.images.push_back(std::move(entry));
  }
  detail::write_file_atomic(dir / "manifest.json", manifest_to_json(manifest) + "\n");
  write_features(dir / "features.gsfv", corpus.features);
  write_similarity_scores(dir / "scores.csv", scores);
}

}  // namespace partguide
