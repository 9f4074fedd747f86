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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "partguide/classifier.hpp"
#include "partguide/features.hpp"
#include "partguide/geometry.hpp"
#include "partguide/patchgrid.hpp"

namespace partguide {

/// Guidance variants. ROI variants group selected patches into regions;
/// patch variants treat every selected patch as its own region.
enum class Variant {
  kGGSAM,       // ROI + text prompt (grounded segmenter)
  kCGSAM,       // ROI + ROI-center point
  kLGSAM,       // ROI + center of the most confident patch
  kPatchNaive,  // patch box is the mask, no segmenter
  kPatchGGSAM,  // patch + text prompt
  kPatchCGSAM,  // patch + patch-center point
};

/// All variants in declared order (also the tie-break order for selection).
std::span<const Variant> all_variants();
/// The three ROI variants, in declared order.
std::span<const Variant> roi_variants();

std::string to_string(Variant v);
/// Accepts "lgsam", "patch-naive", "PatchCGSAM", ... (case-insensitive,
/// '-' and '_' ignored).
std::optional<Variant> parse_variant(std::string_view text);

bool groups_patches(Variant v);

enum class PromptMode { kLikelihood, kCenter };

struct PromptedRegion {
  Box roi;
  std::optional<Point> point;
  std::optional<std::string> text;
  /// Patch indices, ascending.
  std::vector<int> member_patches;
  double peak_confidence = 0.0;
};

/// Indices p with confidences[p] > threshold (strict).
std::vector<int> threshold_patches(std::span<const double> confidences, double threshold);

/// Connected components of the selected patches under positive-area box
/// overlap. One region per component with roi = bounding box of the
/// members; prompts unset. Output is sorted by (x0, y0, x1, y1, first member)
/// and does not depend on input order.
std::vector<PromptedRegion> group_rois(std::span<const Patch> selected);

/// Sets the point prompt: kLikelihood uses the center of the most confident
/// member (lowest index on ties), kCenter the ROI center. `patches` is
/// indexed by patch index. Also fills peak_confidence.
PromptedRegion infer_prompt(PromptedRegion region, std::span<const Patch> patches,
                            std::span<const double> confidences, PromptMode mode);

/// Per-patch confidences of `model` on the grid's feature rows.
std::vector<double> patch_confidences(const PatchGrid& grid, const FeatureBlob& features,
                                      const GuidanceModel& model);

/// Regions for one image from precomputed confidences.
std::vector<PromptedRegion> guide(const PatchGrid& grid, std::span<const double> confidences,
                                  Variant variant, double threshold,
                                  const std::string& part_class);

/// Full guidance for one image and part: classify patches, threshold, group
/// (ROI variants) and attach the variant's prompt.
std::vector<PromptedRegion> run_guidance(const PatchGrid& grid, const FeatureBlob& features,
                                         const GuidanceModel& model, Variant variant,
                                         double threshold);

/// Union-find with path halving and union by size.
class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n);
  std::size_t find(std::size_t x);
  bool unite(std::size_t a, std::size_t b);

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace partguide
