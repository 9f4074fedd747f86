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

#include "partguide/dataset.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "io.hpp"
#include "partguide/error.hpp"

namespace partguide {

using nlohmann::json;
using nlohmann::ordered_json;

MergeTable::MergeTable(std::map<std::string, std::string> mapping) : mapping_(std::move(mapping)) {
  for (const auto& [raw, merged] : mapping_) {
    const auto it = mapping_.find(merged);
    if (it != mapping_.end() && it->second != merged) {
      fail(ErrorCode::kFormat, "merge table chains '" + raw + "' -> '" + merged + "' -> '" +
                                   it->second + "'; targets must be final class names");
    }
  }
}

const std::string& MergeTable::apply(const std::string& raw) const {
  const auto it = mapping_.find(raw);
  return it == mapping_.end() ? raw : it->second;
}

const ImageEntry& Manifest::image(const std::string& id) const {
  for (const auto& img : images) {
    if (img.id == id) return img;
  }
  fail(ErrorCode::kNotFound, "manifest has no image '" + id + "'");
}

bool Manifest::has_class(const std::string& part_class) const {
  return std::find(part_classes.begin(), part_classes.end(), part_class) != part_classes.end();
}

Manifest parse_manifest(const std::string& json_text, const std::filesystem::path& root) {
  Manifest m;
  m.root = root;
  try {
    const auto j = json::parse(json_text);
    m.dataset_id = j.value("dataset_id", std::string{});
    std::map<std::string, std::string> mapping;
    if (j.contains("merge_table")) {
      for (const auto& [raw, merged] : j.at("merge_table").items()) {
        mapping[raw] = merged.get<std::string>();
      }
    }
    m.merge_table = MergeTable(std::move(mapping));

    for (const auto& raw : j.at("part_classes")) {
      const auto& merged = m.merge_table.apply(raw.get<std::string>());
      if (!m.has_class(merged)) m.part_classes.push_back(merged);
    }

    std::set<std::string> ids;
    for (const auto& ji : j.at("images")) {
      ImageEntry img;
      img.id = ji.at("id").get<std::string>();
      img.width = ji.at("width").get<int>();
      img.height = ji.at("height").get<int>();
      img.pixel_source = ji.value("pixel_source", std::string{});
      if (img.width <= 0 || img.height <= 0) {
        fail(ErrorCode::kFormat, "image '" + img.id + "' has non-positive dimensions");
      }
      if (!ids.insert(img.id).second) fail(ErrorCode::kFormat, "duplicate image id '" + img.id + "'");
      if (ji.contains("masks")) {
        for (const auto& [raw, src] : ji.at("masks").items()) {
          const auto& merged = m.merge_table.apply(raw);
          if (!m.has_class(merged)) {
            fail(ErrorCode::kFormat, "image '" + img.id + "' has a mask for class '" + raw +
                                         "' which is not a part class after merging");
          }
          const auto add = [&](const json& entry) {
            std::filesystem::path p = entry.get<std::string>();
            if (p.is_relative() && !root.empty()) p = root / p;
            img.mask_sources[merged].push_back(p);
          };
          if (src.is_array()) {
            for (const auto& entry : src) add(entry);
          } else {
            add(src);
          }
        }
      }
      m.images.push_back(std::move(img));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  const auto text = detail::read_text_file(path);
  try {
    return parse_manifest(text, path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string manifest_to_json(const Manifest& manifest) {
  ordered_json j;
  j["dataset_id"] = manifest.dataset_id;
  j["part_classes"] = manifest.part_classes;
  auto merge = ordered_json::object();
  for (const auto& [raw, merged] : manifest.merge_table.mapping()) merge[raw] = merged;
  j["merge_table"] = merge;
  auto images = ordered_json::array();
  for (const auto& img : manifest.images) {
    ordered_json ji;
    ji["id"] = img.id;
    ji["width"] = img.width;
    ji["height"] = img.height;
    ji["pixel_source"] = img.pixel_source;
    auto masks = ordered_json::object();
    for (const auto& [cls, paths] : img.mask_sources) {
      if (paths.empty()) continue;
      auto names = ordered_json::array();
      for (auto p : paths) {
        if (!manifest.root.empty()) p = p.lexically_relative(manifest.root);
        names.push_back(p.generic_string());
      }
      masks[cls] = names.size() == 1 ? names.front() : names;
    }
    ji["masks"] = masks;
    images.push_back(std::move(ji));
  }
  j["images"] = std::move(images);
  return j.dump(2);
}

BinaryGrid load_ground_truth(const ImageEntry& image, const std::string& part_class) {
  BinaryGrid grid(image.width, image.height);
  const auto it = image.mask_sources.find(part_class);
  if (it == image.mask_sources.end()) return grid;
  for (const auto& path : it->second) {
    const auto mask = read_mask_file(path);
    if (mask.width != image.width || mask.height != image.height) {
      fail(ErrorCode::kFormat, path.string() + ": mask is " + std::to_string(mask.width) + "x" +
                                   std::to_string(mask.height) + ", image '" + image.id +
                                   "' is " + std::to_string(image.width) + "x" +
                                   std::to_string(image.height));
    }
    grid.merge(decode_rle(mask));
  }
  return grid;
}

void SimilarityScores::add(const PatchKey& key, const std::string& part_class, double score) {
  if (!(score >= -1.0 && score <= 1.0)) {
    fail(ErrorCode::kFormat, "similarity score out of [-1,1] for " + key.image_id + "#" +
                                 std::to_string(key.patch_index));
  }
  auto [it, inserted] = scores_.try_emplace({key, part_class}, score);
  if (!inserted) it->second = std::max(it->second, score);
}

std::optional<double> SimilarityScores::get(const PatchKey& key,
                                            const std::string& part_class) const {
  const auto it = scores_.find({key, part_class});
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> SimilarityScores::classes() const {
  std::set<std::string> s;
  for (const auto& [k, v] : scores_) s.insert(k.second);
  return {s.begin(), s.end()};
}

void SimilarityScores::require_patches(std::span<const PatchKey> known) const {
  const std::set<PatchKey> set(known.begin(), known.end());
  for (const auto& [k, v] : scores_) {
    if (!set.contains(k.first)) {
      fail(ErrorCode::kNotFound, "similarity score references unknown patch " +
                                     k.first.image_id + "#" + std::to_string(k.first.patch_index));
    }
  }
}

SimilarityScores load_similarity_scores(const std::filesystem::path& path,
                                        const MergeTable& merge) {
  const auto rows = detail::read_csv(path);
  const std::vector<std::string> header{"image_id", "patch_index", "part_class", "score"};
  if (rows.empty() || rows.front() != header) {
    fail(ErrorCode::kFormat, path.string() + ": expected header image_id,patch_index,part_class,score");
  }
  SimilarityScores scores;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 4) {
      fail(ErrorCode::kFormat, path.string() + ": line " + std::to_string(r + 1) +
                                   " does not have 4 fields");
    }
    const PatchKey key{row[0], static_cast<int>(detail::parse_int(row[1], "patch_index"))};
    scores.add(key, merge.apply(row[2]), detail::parse_double(row[3], "score"));
  }
  return scores;
}

void write_similarity_scores(const std::filesystem::path& path, const SimilarityScores& scores) {
  std::ostringstream out;
  out << "image_id,patch_index,part_class,score\n";
  out << std::setprecision(9);
  for (const auto& [k, v] : scores.entries()) {
    out << k.first.image_id << ',' << k.first.patch_index << ',' << k.second << ',' << v << '\n';
  }
  detail::write_file_atomic(path, out.str());
}

}  // namespace partguide
