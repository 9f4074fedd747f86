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

#include "partguide/patchgrid.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "partguide/error.hpp"

namespace partguide {
namespace {

std::vector<int> axis_positions(int extent, int size, int stride) {
  std::vector<int> pos;
  for (int p = 0; p + size <= extent; p += stride) pos.push_back(p);
  if (pos.back() + size < extent) pos.push_back(extent - size);
  return pos;
}

}  // namespace

std::vector<PatchKey> PatchGrid::keys() const {
  std::vector<PatchKey> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back({image_id, p.index});
  return out;
}

PatchGrid build_grid(std::string image_id, int width, int height, const GridConfig& config) {
  if (config.divisor < 1) fail(ErrorCode::kInvalidArgument, "grid divisor must be >= 1");
  if (!(config.overlap_fraction >= 0.0 && config.overlap_fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "overlap fraction must be in [0, 1)");
  }
  if (width <= 0 || height <= 0) fail(ErrorCode::kInvalidArgument, "image has no pixels");

  PatchGrid grid;
  grid.image_id = std::move(image_id);
  grid.image_width = width;
  grid.image_height = height;

  if (width < config.divisor || height < config.divisor) {
    grid.degenerate = true;
    grid.patch_size = std::min(width, height);
    grid.stride = grid.patch_size;
    grid.columns = grid.rows = 1;
    grid.patches.push_back({0, Box{0, 0, width, height}});
    return grid;
  }

  const int size = static_cast<int>(
      std::lround(static_cast<double>(std::min(width, height)) / config.divisor));
  const int stride =
      std::max(1, static_cast<int>(std::lround(size * (1.0 - config.overlap_fraction))));
  grid.patch_size = size;
  grid.stride = stride;

  const auto xs = axis_positions(width, size, stride);
  const auto ys = axis_positions(height, size, stride);
  grid.columns = static_cast<int>(xs.size());
  grid.rows = static_cast<int>(ys.size());
  grid.patches.reserve(xs.size() * ys.size());
  int index = 0;
  for (int y : ys) {
    for (int x : xs) grid.patches.push_back({index++, Box{x, y, x + size, y + size}});
  }
  return grid;
}

IntegralImage::IntegralImage(const BinaryGrid& grid)
    : width_(grid.width()),
      height_(grid.height()),
      sums_(static_cast<std::size_t>(width_ + 1) * (height_ + 1), 0) {
  const auto stride = static_cast<std::size_t>(width_ + 1);
  for (int y = 0; y < height_; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < width_; ++x) {
      row += grid.at(x, y) ? 1 : 0;
      sums_[(y + 1) * stride + (x + 1)] = sums_[y * stride + (x + 1)] + row;
    }
  }
}

std::int64_t IntegralImage::count(const Box& box) const {
  const int x0 = std::clamp(box.x0, 0, width_), x1 = std::clamp(box.x1, 0, width_);
  const int y0 = std::clamp(box.y0, 0, height_), y1 = std::clamp(box.y1, 0, height_);
  if (x1 <= x0 || y1 <= y0) return 0;
  const auto stride = static_cast<std::size_t>(width_ + 1);
  return sums_[y1 * stride + x1] - sums_[y0 * stride + x1] - sums_[y1 * stride + x0] +
         sums_[y0 * stride + x0];
}

std::vector<LabeledPatch> label_patches(const PatchGrid& grid, const BinaryGrid& mask,
                                        const std::string& part_class,
                                        double coverage_threshold) {
  if (mask.width() != grid.image_width || mask.height() != grid.image_height) {
    fail(ErrorCode::kInvalidArgument,
         "mask is " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
             " but grid image '" + grid.image_id + "' is " + std::to_string(grid.image_width) +
             "x" + std::to_string(grid.image_height));
  }
  const IntegralImage integral(mask);
  std::vector<LabeledPatch> out;
  out.reserve(grid.size());
  for (const auto& p : grid.patches) {
    const double coverage =
        static_cast<double>(integral.count(p.box)) / static_cast<double>(p.box.area());
    out.push_back({p, part_class, coverage >= coverage_threshold, coverage});
  }
  return out;
}

std::vector<LabeledPatch> label_patches(const PatchGrid& grid, const SegmentMask& mask,
                                        double coverage_threshold) {
  if (mask.image_id != grid.image_id) {
    fail(ErrorCode::kInvalidArgument,
         "mask for image '" + mask.image_id + "' applied to grid of '" + grid.image_id + "'");
  }
  return label_patches(grid, decode_rle(mask), mask.part_class, coverage_threshold);
}

std::string grids_to_json(std::span<const PatchGrid> grids, const GridConfig& config) {
  nlohmann::ordered_json j;
  j["divisor"] = config.divisor;
  j["overlap_fraction"] = config.overlap_fraction;
  j["size_basis"] = "min(width,height)";
  auto arr = nlohmann::ordered_json::array();
  for (const auto& g : grids) {
    nlohmann::ordered_json jg;
    jg["image_id"] = g.image_id;
    jg["width"] = g.image_width;
    jg["height"] = g.image_height;
    jg["patch_size"] = g.patch_size;
    jg["stride"] = g.stride;
    jg["columns"] = g.columns;
    jg["rows"] = g.rows;
    jg["degenerate"] = g.degenerate;
    auto boxes = nlohmann::ordered_json::array();
    for (const auto& p : g.patches) boxes.push_back({p.box.x0, p.box.y0, p.box.x1, p.box.y1});
    jg["patches"] = std::move(boxes);
    arr.push_back(std::move(jg));
  }
  j["grids"] = std::move(arr);
  return j.dump();
}

}  // namespace partguide
