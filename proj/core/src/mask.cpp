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

#include "partguide/mask.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "io.hpp"
#include "partguide/error.hpp"

namespace partguide {

using nlohmann::ordered_json;

BinaryGrid::BinaryGrid(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) fail(ErrorCode::kInvalidArgument, "negative grid dimensions");
  cells_.assign(static_cast<std::size_t>(size()), 0);
}

void BinaryGrid::fill(const Box& box, bool v) {
  const int x0 = std::max(box.x0, 0), x1 = std::min(box.x1, width_);
  const int y0 = std::max(box.y0, 0), y1 = std::min(box.y1, height_);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, v);
  }
}

void BinaryGrid::merge(const BinaryGrid& other) {
  if (other.width_ != width_ || other.height_ != height_) {
    fail(ErrorCode::kInvalidArgument, "merge of differently sized grids");
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] |= other.cells_[i];
}

void BinaryGrid::paste_or(const BinaryGrid& local, const Box& box) {
  for (int y = 0; y < local.height(); ++y) {
    const int gy = box.y0 + y;
    if (gy < 0 || gy >= height_) continue;
    for (int x = 0; x < local.width(); ++x) {
      const int gx = box.x0 + x;
      if (gx < 0 || gx >= width_) continue;
      if (local.at(x, y)) set(gx, gy);
    }
  }
}

BinaryGrid BinaryGrid::crop(const Box& box) const {
  const Box c{std::max(box.x0, 0), std::max(box.y0, 0), std::min(box.x1, width_),
              std::min(box.y1, height_)};
  BinaryGrid out(std::max(c.width(), 0), std::max(c.height(), 0));
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) out.set(x, y, at(c.x0 + x, c.y0 + y));
  }
  return out;
}

std::int64_t BinaryGrid::popcount() const {
  return std::count(cells_.begin(), cells_.end(), std::uint8_t{1});
}

std::int64_t BinaryGrid::popcount(const Box& box) const {
  std::int64_t n = 0;
  const int x0 = std::max(box.x0, 0), x1 = std::min(box.x1, width_);
  const int y0 = std::max(box.y0, 0), y1 = std::min(box.y1, height_);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) n += at(x, y) ? 1 : 0;
  }
  return n;
}

std::int64_t SegmentMask::popcount() const {
  std::int64_t n = 0;
  for (const auto& r : runs) n += r.length;
  return n;
}

std::vector<Run> encode_rle(const BinaryGrid& grid) {
  std::vector<Run> runs;
  const std::int64_t n = grid.size();
  std::int64_t i = 0;
  while (i < n) {
    if (!grid.at_index(i)) {
      ++i;
      continue;
    }
    const std::int64_t start = i;
    while (i < n && grid.at_index(i)) ++i;
    runs.push_back({start, i - start});
  }
  return runs;
}

void validate_runs(const std::vector<Run>& runs, int width, int height) {
  if (width < 0 || height < 0) fail(ErrorCode::kFormat, "negative mask dimensions");
  const std::int64_t total = static_cast<std::int64_t>(width) * height;
  std::int64_t prev_end = 0;
  for (const auto& r : runs) {
    if (r.length <= 0) fail(ErrorCode::kFormat, "run with non-positive length");
    if (r.start < prev_end) fail(ErrorCode::kFormat, "overlapping or unsorted runs");
    if (r.start + r.length > total) fail(ErrorCode::kFormat, "run exceeds mask bounds");
    prev_end = r.start + r.length;
  }
}

BinaryGrid decode_rle(const std::vector<Run>& runs, int width, int height) {
  validate_runs(runs, width, height);
  BinaryGrid grid(width, height);
  for (const auto& r : runs) {
    for (std::int64_t i = r.start; i < r.start + r.length; ++i) grid.set_index(i);
  }
  return grid;
}

BinaryGrid decode_rle(const SegmentMask& mask) {
  return decode_rle(mask.runs, mask.width, mask.height);
}

SegmentMask make_mask(std::string image_id, std::string part_class, const BinaryGrid& grid) {
  return {std::move(image_id), std::move(part_class), grid.width(), grid.height(),
          encode_rle(grid)};
}

std::string mask_to_json(const SegmentMask& mask) {
  ordered_json j;
  j["image_id"] = mask.image_id;
  j["class"] = mask.part_class;
  j["width"] = mask.width;
  j["height"] = mask.height;
  auto rle = ordered_json::array();
  for (const auto& r : mask.runs) rle.push_back({r.start, r.length});
  j["rle"] = std::move(rle);
  return j.dump();
}

SegmentMask mask_from_json(const std::string& text) {
  SegmentMask m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.image_id = j.at("image_id").get<std::string>();
    m.part_class = j.at("class").get<std::string>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    for (const auto& r : j.at("rle")) {
      if (!r.is_array() || r.size() != 2) fail(ErrorCode::kFormat, "rle entry must be [start,run]");
      m.runs.push_back({r[0].get<std::int64_t>(), r[1].get<std::int64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("mask sidecar: ") + e.what());
  }
  validate_runs(m.runs, m.width, m.height);
  return m;
}

SegmentMask read_mask_file(const std::filesystem::path& path) {
  try {
    return mask_from_json(detail::read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_mask_file(const std::filesystem::path& path, const SegmentMask& mask) {
  detail::write_file_atomic(path, mask_to_json(mask) + "\n");
}

}  // namespace partguide
