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

#include "partguide/label_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "partguide/error.hpp"

namespace partguide {

std::string record_to_json(const AnnotationRecord& record) {
  nlohmann::ordered_json j;
  j["prototype_id"] = record.prototype_id;
  j["part_class"] = record.part_class;
  j["bulk_label"] = record.bulk_label ? 1 : 0;
  j["exceptions"] = record.exceptions;
  j["clicks"] = record.clicks;
  j["source"] = to_string(record.source);
  j["annotator"] = record.annotator;
  j["timestamp"] = record.timestamp;
  return j.dump();
}

AnnotationRecord record_from_json(const std::string& line) {
  AnnotationRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.prototype_id = j.at("prototype_id").get<int>();
    r.part_class = j.at("part_class").get<std::string>();
    const auto& bulk = j.at("bulk_label");
    r.bulk_label = bulk.is_boolean() ? bulk.get<bool>() : bulk.get<int>() != 0;
    r.exceptions = j.value("exceptions", std::vector<int>{});
    r.clicks = j.value("clicks", click_count(r.exceptions.size()));
    r.source = parse_label_source(j.value("source", std::string("simulated")));
    r.annotator = j.value("annotator", std::string{});
    r.timestamp = j.value("timestamp", std::string{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("annotation record: ") + e.what());
  }
  if (r.clicks != click_count(r.exceptions.size())) {
    fail(ErrorCode::kFormat, "annotation record clicks != 1 + |exceptions|");
  }
  return r;
}

LabelStore::LabelStore(std::filesystem::path path) : path_(std::move(path)) {
  std::lock_guard lock(mutex_);
  load_locked();
}

void LabelStore::load_locked() const {
  latest_.clear();
  skipped_ = 0;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      ++skipped_;  // torn final write
      break;
    }
    const auto line = content.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      auto rec = record_from_json(line);
      latest_[{rec.part_class, rec.prototype_id}] = std::move(rec);
    } catch (const Error&) {
      ++skipped_;
    }
  }
}

void LabelStore::append(const AnnotationRecord& record) {
  if (record.clicks != click_count(record.exceptions.size())) {
    fail(ErrorCode::kInvalidArgument, "record clicks != 1 + |exceptions|");
  }
  std::string line = record_to_json(record) + "\n";
  std::lock_guard lock(mutex_);
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  const int fd = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorCode::kIo, "cannot open label store " + path_.string() + ": " + std::strerror(errno));
  // Terminate a torn trailing line so it cannot swallow this record.
  if (const off_t end = ::lseek(fd, 0, SEEK_END); end > 0) {
    char last = '\n';
    if (::pread(fd, &last, 1, end - 1) == 1 && last != '\n') line.insert(line.begin(), '\n');
  }
  const auto written = ::write(fd, line.data(), line.size());
  const int write_errno = errno;
  ::fsync(fd);
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size())) {
    fail(ErrorCode::kIo, "short write to label store: " + std::string(std::strerror(write_errno)));
  }
  latest_[{record.part_class, record.prototype_id}] = record;
}

std::vector<AnnotationRecord> LabelStore::records() const {
  std::lock_guard lock(mutex_);
  std::vector<AnnotationRecord> out;
  out.reserve(latest_.size());
  for (const auto& [k, r] : latest_) out.push_back(r);
  return out;
}

std::vector<AnnotationRecord> LabelStore::records(const std::string& part_class) const {
  std::lock_guard lock(mutex_);
  std::vector<AnnotationRecord> out;
  for (const auto& [k, r] : latest_) {
    if (k.first == part_class) out.push_back(r);
  }
  return out;
}

std::optional<AnnotationRecord> LabelStore::find(int prototype_id,
                                                 const std::string& part_class) const {
  std::lock_guard lock(mutex_);
  const auto it = latest_.find({part_class, prototype_id});
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelStore::skipped_lines() const {
  std::lock_guard lock(mutex_);
  return skipped_;
}

std::filesystem::path resolve_store_path(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("PARTGUIDE_STORE"); env != nullptr && *env != '\0') {
    return env;
  }
  return fallback;
}

}  // namespace partguide
