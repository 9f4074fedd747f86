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

#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "partguide/error.hpp"
#include "partguide/label_store.hpp"
#include "test_support.hpp"

namespace partguide {
namespace {

AnnotationRecord make(int id, const std::string& cls, bool bulk, std::vector<int> exceptions) {
  AnnotationRecord r;
  r.prototype_id = id;
  r.part_class = cls;
  r.bulk_label = bulk;
  r.exceptions = std::move(exceptions);
  r.clicks = click_count(r.exceptions.size());
  r.source = LabelSource::kHuman;
  r.annotator = "ann";
  r.timestamp = "2026-01-01T00:00:00Z";
  return r;
}

TEST(RecordJson, RoundTripAndValidation) {
  const auto r = make(3, "door", true, {1, 4});
  EXPECT_EQ(record_from_json(record_to_json(r)), r);
  EXPECT_THROW(record_from_json("{\"prototype_id\":1"), Error);
  EXPECT_THROW(record_from_json(R"({"prototype_id":1,"part_class":"a","bulk_label":1,"exceptions":[2],"clicks":5})"),
               Error);
  const auto minimal = record_from_json(R"({"prototype_id":1,"part_class":"a","bulk_label":true})");
  EXPECT_EQ(minimal.clicks, 1);
  EXPECT_EQ(minimal.source, LabelSource::kSimulated);
}

TEST(LabelStore, LastWriteWins) {
  testing::TempDir dir;
  const auto path = dir.path() / "labels.jsonl";
  {
    LabelStore store(path);
    store.append(make(1, "door", true, {}));
    store.append(make(2, "door", false, {0}));
    store.append(make(1, "door", false, {0, 1}));
    store.append(make(1, "wheel", true, {}));
    ASSERT_EQ(store.records().size(), 3u);
    EXPECT_FALSE(store.find(1, "door")->bulk_label);
  }
  LabelStore reopened(path);
  EXPECT_EQ(reopened.skipped_lines(), 0u);
  const auto doors = reopened.records("door");
  ASSERT_EQ(doors.size(), 2u);
  EXPECT_EQ(doors[0], make(1, "door", false, {0, 1}));
  EXPECT_EQ(doors[1].prototype_id, 2);
  EXPECT_FALSE(reopened.find(9, "door").has_value());
}

TEST(LabelStore, TornTrailingLineIsSkippedAndRepaired) {
  testing::TempDir dir;
  const auto path = dir.path() / "labels.jsonl";
  testing::write_text(path, record_to_json(make(1, "door", true, {})) + "\n" +
                                "{\"prototype_id\":2,\"part_cl");
  LabelStore store(path);
  EXPECT_EQ(store.skipped_lines(), 1u);
  EXPECT_EQ(store.records().size(), 1u);
  store.append(make(3, "door", true, {}));
  LabelStore reopened(path);
  EXPECT_EQ(reopened.records().size(), 2u);
  EXPECT_TRUE(reopened.find(3, "door").has_value());
  EXPECT_EQ(reopened.skipped_lines(), 1u);
}

TEST(LabelStore, RejectsInconsistentClicks) {
  testing::TempDir dir;
  LabelStore store(dir.path() / "l.jsonl");
  auto r = make(1, "door", true, {1});
  r.clicks = 1;
  EXPECT_THROW(store.append(r), Error);
}

TEST(LabelStore, ConcurrentAppendsAllLand) {
  testing::TempDir dir;
  const auto path = dir.path() / "l.jsonl";
  LabelStore store(path);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&store, t] {
      for (int i = 0; i < 25; ++i) store.append(make(t * 100 + i, "door", i % 2 == 0, {}));
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(store.records().size(), 100u);
  LabelStore reopened(path);
  EXPECT_EQ(reopened.records().size(), 100u);
  EXPECT_EQ(reopened.skipped_lines(), 0u);
}

TEST(LabelStore, EnvironmentOverridesFallbackPath) {
  ::unsetenv("PARTGUIDE_STORE");
  EXPECT_EQ(resolve_store_path("a.jsonl"), std::filesystem::path("a.jsonl"));
  ::setenv("PARTGUIDE_STORE", "/tmp/x.jsonl", 1);
  EXPECT_EQ(resolve_store_path("a.jsonl"), std::filesystem::path("/tmp/x.jsonl"));
  ::unsetenv("PARTGUIDE_STORE");
}

}  // namespace
}  // namespace partguide
