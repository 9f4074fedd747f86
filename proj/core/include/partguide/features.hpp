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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace partguide {

/// Identifies one patch of one image.
struct PatchKey {
  std::string image_id;
  int patch_index = 0;

  friend auto operator<=>(const PatchKey&, const PatchKey&) = default;
  friend bool operator==(const PatchKey&, const PatchKey&) = default;
};

/// GSFV feature blob.
///
/// Byte layout (all integers and floats little-endian):
///
///   offset  size  field
///   0       4     magic "GSFV"
///   4       2     version (u16, currently 1)
///   6       4     patch_count (u32)
///   10      4     dim (u32)
///   14      ...   index table, patch_count entries of
///                   u32 patch_index, u16 id_length, id_length bytes UTF-8 image_id
///   ...     4*patch_count*dim   row-major f32 matrix, row r belongs to index entry r
///
/// Keys must be unique and every value finite.
class FeatureBlob {
 public:
  static constexpr std::uint16_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 14;

  FeatureBlob() = default;
  explicit FeatureBlob(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  /// Appends a row; throws on duplicate key, wrong dimension or non-finite value.
  void add(PatchKey key, std::span<const float> row);

  bool contains(const PatchKey& key) const { return lookup_.contains(key); }

  /// Throws Error(kNotFound) for unknown keys.
  std::span<const float> row(const PatchKey& key) const;
  std::span<const float> row(std::size_t r) const {
    return {values_.data() + r * dim_, dim_};
  }
  const PatchKey& key(std::size_t r) const { return keys_[r]; }
  const std::vector<PatchKey>& keys() const { return keys_; }

  std::optional<std::size_t> find(const PatchKey& key) const;

  /// Serialized size in bytes.
  std::size_t byte_size() const;

  std::vector<char> serialize() const;
  static FeatureBlob deserialize(std::span<const char> bytes);

 private:
  std::size_t dim_ = 0;
  std::vector<PatchKey> keys_;
  std::vector<float> values_;
  std::map<PatchKey, std::size_t> lookup_;
};

FeatureBlob read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureBlob& blob);

/// Fails with Error(kNotFound) naming the first key absent from `blob`.
void require_rows(const FeatureBlob& blob, std::span<const PatchKey> keys);

/// Human-readable description of the byte layout (the
/// `export-features-spec` CLI output).
std::string feature_format_description();

}  // namespace partguide
