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

#include "partguide/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "io.hpp"
#include "partguide/error.hpp"

namespace partguide {
namespace {

static_assert(std::numeric_limits<float>::is_iec559, "GSFV requires IEEE-754 floats");

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorCode::kFormat, "GSFV blob truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) {
      v |= static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_++]) << (8 * i));
    }
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void FeatureBlob::add(PatchKey key, std::span<const float> row) {
  if (row.size() != dim_) {
    fail(ErrorCode::kInvalidArgument, "feature row has dim " + std::to_string(row.size()) +
                                          ", expected " + std::to_string(dim_));
  }
  for (float v : row) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::kFormat, "non-finite feature value for " + key.image_id + "#" +
                                   std::to_string(key.patch_index));
    }
  }
  if (key.image_id.size() > std::numeric_limits<std::uint16_t>::max()) {
    fail(ErrorCode::kInvalidArgument, "image id too long for GSFV");
  }
  if (lookup_.contains(key)) {
    fail(ErrorCode::kFormat,
         "duplicate feature key " + key.image_id + "#" + std::to_string(key.patch_index));
  }
  lookup_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  values_.insert(values_.end(), row.begin(), row.end());
}

std::optional<std::size_t> FeatureBlob::find(const PatchKey& key) const {
  const auto it = lookup_.find(key);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> FeatureBlob::row(const PatchKey& key) const {
  const auto r = find(key);
  if (!r) {
    fail(ErrorCode::kNotFound,
         "no features for " + key.image_id + "#" + std::to_string(key.patch_index));
  }
  return row(*r);
}

std::size_t FeatureBlob::byte_size() const {
  std::size_t n = kHeaderBytes;
  for (const auto& k : keys_) n += 6 + k.image_id.size();
  return n + values_.size() * sizeof(float);
}

std::vector<char> FeatureBlob::serialize() const {
  std::vector<char> out(byte_size());
  std::size_t pos = 0;
  const auto put = [&](const void* src, std::size_t n) {
    std::memcpy(out.data() + pos, src, n);
    pos += n;
  };
  const auto u16 = [&](std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    put(b, 2);
  };
  const auto u32 = [&](std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    put(b, 4);
  };
  put("GSFV", 4);
  u16(kVersion);
  u32(static_cast<std::uint32_t>(keys_.size()));
  u32(static_cast<std::uint32_t>(dim_));
  for (const auto& k : keys_) {
    u32(static_cast<std::uint32_t>(k.patch_index));
    u16(static_cast<std::uint16_t>(k.image_id.size()));
    put(k.image_id.data(), k.image_id.size());
  }
  for (float v : values_) u32(std::bit_cast<std::uint32_t>(v));
  return out;
}

FeatureBlob FeatureBlob::deserialize(std::span<const char> bytes) {
  Reader in(bytes);
  if (in.str(4) != "GSFV") fail(ErrorCode::kFormat, "GSFV magic mismatch");
  const auto version = in.u16();
  if (version != kVersion) {
    fail(ErrorCode::kFormat, "unsupported GSFV version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  if (count > 0 && dim == 0) fail(ErrorCode::kFormat, "GSFV dim is zero");

  std::vector<PatchKey> keys;
  keys.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto index = in.u32();
    const auto len = in.u16();
    if (index > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
      fail(ErrorCode::kFormat, "GSFV patch index out of range");
    }
    keys.push_back({in.str(len), static_cast<int>(index)});
  }
  const std::size_t expected = static_cast<std::size_t>(count) * dim * sizeof(float);
  if (in.remaining() != expected) {
    fail(ErrorCode::kFormat, "GSFV matrix size inconsistent with patch_count x dim (" +
                                 std::to_string(in.remaining()) + " bytes, expected " +
                                 std::to_string(expected) + ")");
  }
  FeatureBlob blob(dim);
  std::vector<float> row(dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    for (auto& v : row) v = in.f32();
    blob.add(std::move(keys[r]), row);
  }
  return blob;
}

FeatureBlob read_features(const std::filesystem::path& path) {
  const auto bytes = detail::read_binary_file(path);
  try {
    return FeatureBlob::deserialize(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_features(const std::filesystem::path& path, const FeatureBlob& blob) {
  const auto bytes = blob.serialize();
  detail::write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

void require_rows(const FeatureBlob& blob, std::span<const PatchKey> keys) {
  for (const auto& k : keys) {
    if (!blob.contains(k)) {
      fail(ErrorCode::kNotFound,
           "feature blob has no row for " + k.image_id + "#" + std::to_string(k.patch_index));
    }
  }
}

std::string feature_format_description() {
  return R"(GSFV feature blob, version 1. All integers and floats are little-endian.

  offset  size            field
  0       4               magic, ASCII "GSFV"
  4       2               version, u16 = 1
  6       4               patch_count, u32
  10      4               dim, u32
  14      variable        index table: patch_count entries of
                            u32 patch_index
                            u16 id_length
                            id_length bytes image_id (UTF-8, no terminator)
  ...     4*count*dim     f32 matrix, row-major; row r belongs to index entry r

Constraints: (image_id, patch_index) pairs are unique; every value is finite;
patch_index follows the row-major order of `partguide grid` output.
Total size = 14 + sum(6 + id_length) + 4*patch_count*dim bytes.
)";
}

}  // namespace partguide
