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
#include <string>
#include <vector>

#include "partguide/geometry.hpp"

namespace partguide {

/// Dense binary pixel grid, row-major, one byte per pixel (0 or 1).
class BinaryGrid {
 public:
  BinaryGrid() = default;
  BinaryGrid(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t size() const { return static_cast<std::int64_t>(width_) * height_; }

  bool at(int x, int y) const { return cells_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { cells_[index(x, y)] = v ? 1 : 0; }
  bool at_index(std::int64_t i) const { return cells_[static_cast<std::size_t>(i)] != 0; }
  void set_index(std::int64_t i, bool v = true) { cells_[static_cast<std::size_t>(i)] = v ? 1 : 0; }

  /// Sets every pixel of `box` (clipped to the grid).
  void fill(const Box& box, bool v = true);

  /// Pixelwise OR with a same-sized grid.
  void merge(const BinaryGrid& other);

  /// Copies `local` (sized like `box`) into this grid at the box position.
  /// Only set pixels are written; pixels outside the grid are dropped.
  void paste_or(const BinaryGrid& local, const Box& box);

  /// Sub-grid covering `box`, clipped to the grid.
  BinaryGrid crop(const Box& box) const;

  std::int64_t popcount() const;
  std::int64_t popcount(const Box& box) const;

  const std::vector<std::uint8_t>& cells() const { return cells_; }

  friend bool operator==(const BinaryGrid&, const BinaryGrid&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// One run of set pixels: `length` consecutive row-major indices from `start`.
struct Run {
  std::int64_t start = 0;
  std::int64_t length = 0;

  friend bool operator==(const Run&, const Run&) = default;
};

/// Binary mask in run-length form plus provenance.
struct SegmentMask {
  std::string image_id;
  std::string part_class;
  int width = 0;
  int height = 0;
  std::vector<Run> runs;

  std::int64_t popcount() const;
};

/// Canonical run-length encoding: sorted, maximal, non-adjacent runs.
std::vector<Run> encode_rle(const BinaryGrid& grid);

/// Checks ordering and bounds; throws Error(kFormat) on a violation.
/// Runs may touch (start == previous end) but never overlap.
void validate_runs(const std::vector<Run>& runs, int width, int height);

BinaryGrid decode_rle(const std::vector<Run>& runs, int width, int height);
BinaryGrid decode_rle(const SegmentMask& mask);

SegmentMask make_mask(std::string image_id, std::string part_class, const BinaryGrid& grid);

/// Sidecar JSON: {"image_id","class","width","height","rle":[[start,run],...]}.
std::string mask_to_json(const SegmentMask& mask);
SegmentMask mask_from_json(const std::string& text);
SegmentMask read_mask_file(const std::filesystem::path& path);
void write_mask_file(const std::filesystem::path& path, const SegmentMask& mask);

}  // namespace partguide
