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

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "partguide/prototypes.hpp"

namespace partguide {

std::string record_to_json(const AnnotationRecord& record);
AnnotationRecord record_from_json(const std::string& line);

/// Append-only JSON-lines store of annotation records.
///
/// Each append is a single write(2) of one complete line on an O_APPEND
/// descriptor. On load, the last record per (prototype, class) wins and an
/// unterminated or unparsable trailing line (a torn write) is ignored.
/// Appends from one process are serialized by an internal mutex.
class LabelStore {
 public:
  explicit LabelStore(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }

  void append(const AnnotationRecord& record);

  /// Effective records, ordered by (class, prototype id).
  std::vector<AnnotationRecord> records() const;
  std::vector<AnnotationRecord> records(const std::string& part_class) const;
  std::optional<AnnotationRecord> find(int prototype_id, const std::string& part_class) const;

  /// Lines in the file that were skipped as torn on the last load.
  std::size_t skipped_lines() const;

 private:
  void load_locked() const;

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<std::string, int>, AnnotationRecord> latest_;
  mutable std::size_t skipped_ = 0;
};

/// Resolves the store path: $PARTGUIDE_STORE when set, else `fallback`.
std::filesystem::path resolve_store_path(const std::filesystem::path& fallback);

}  // namespace partguide
