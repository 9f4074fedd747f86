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

#include <span>
#include <string>
#include <vector>

#include "partguide/features.hpp"
#include "partguide/geometry.hpp"
#include "partguide/mask.hpp"

namespace partguide {

struct Patch {
  int index = 0;
  Box box;
};

struct GridConfig {
  int divisor = 14;
  double overlap_fraction = 0.5;
};

/// Overlapping square tiling of one image, patches in row-major order.
struct PatchGrid {
  std::string image_id;
  int image_width = 0;
  int image_height = 0;
  int patch_size = 0;
  int stride = 0;
  int columns = 0;
  int rows = 0;
  /// Image smaller than the divisor: a single full-image patch.
  bool degenerate = false;
  std::vector<Patch> patches;

  std::size_t size() const { return patches.size(); }
  std::vector<PatchKey> keys() const;
};

/// Tiles a width x height image. Patch side is round(min(W,H)/divisor), the
/// stride round(side*(1-overlap)) (at least 1). Positions start at 0 and step
/// by the stride; when the last position does not reach the border, one
/// more patch is placed flush against it.
PatchGrid build_grid(std::string image_id, int width, int height, const GridConfig& config);

struct LabeledPatch {
  Patch patch;
  std::string part_class;
  bool label = false;
  double coverage = 0.0;
};

/// label = 1 iff |patch ∩ mask| / |patch| >= coverage_threshold.
std::vector<LabeledPatch> label_patches(const PatchGrid& grid, const BinaryGrid& mask,
                                        const std::string& part_class,
                                        double coverage_threshold = 0.25);
std::vector<LabeledPatch> label_patches(const PatchGrid& grid, const SegmentMask& mask,
                                        double coverage_threshold = 0.25);

/// Summed-area table for O(1) box popcounts.
class IntegralImage {
 public:
  explicit IntegralImage(const BinaryGrid& grid);
  std::int64_t count(const Box& box) const;

 private:
  int width_;
  int height_;
  std::vector<std::int64_t> sums_;
};

/// Grid geometry as JSON (the `partguide grid` output schema).
std::string grids_to_json(std::span<const PatchGrid> grids, const GridConfig& config);

}  // namespace partguide
