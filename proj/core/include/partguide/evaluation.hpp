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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "partguide/mask.hpp"

namespace partguide {

/// Pixel counts behind an IoU. Summing counts over images gives pooled IoU.
struct IoUCounts {
  std::int64_t intersection = 0;
  std::int64_t union_ = 0;

  /// intersection / union; 1.0 when both masks are empty.
  double iou() const {
    return union_ == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_);
  }
  IoUCounts& operator+=(const IoUCounts& o) {
    intersection += o.intersection;
    union_ += o.union_;
    return *this;
  }
  friend bool operator==(const IoUCounts&, const IoUCounts&) = default;
};

IoUCounts iou_counts(const BinaryGrid& pred, const BinaryGrid& gt);
/// Works on the run lists directly (no decoding).
IoUCounts iou_counts(const SegmentMask& pred, const SegmentMask& gt);
double iou(const BinaryGrid& pred, const BinaryGrid& gt);
double iou(const SegmentMask& pred, const SegmentMask& gt);

/// Rows (part classes) x columns (variants, thresholds, methods) of scores.
class ScoreTable {
 public:
  ScoreTable() = default;
  ScoreTable(std::vector<std::string> rows, std::vector<std::string> columns);

  const std::vector<std::string>& rows() const { return rows_; }
  const std::vector<std::string>& columns() const { return columns_; }

  bool has(std::size_t r, std::size_t c) const;
  double at(std::size_t r, std::size_t c) const;
  double at(const std::string& row, const std::string& column) const;
  void set(std::size_t r, std::size_t c, double v);
  void set(const std::string& row, const std::string& column, double v);

  std::size_t row_index(const std::string& row) const;
  std::size_t column_index(const std::string& column) const;

  /// Throws naming the first missing cell.
  void require_complete() const;

  /// Unweighted mean over rows.
  double column_average(std::size_t c) const;
  std::vector<double> averages() const;
  /// Column with the highest value in row r (first on ties).
  std::size_t best_column(std::size_t r) const;
  /// Column with the highest average (first on ties).
  std::size_t best_average_column() const;

  /// Averages printed in the source file, when it had an "average" row.
  std::optional<std::vector<double>> reported_averages;

 private:
  std::vector<std::string> rows_;
  std::vector<std::string> columns_;
  std::vector<double> cells_;  // NaN = missing
};

/// CSV: header `part,<col1>,<col2>,...`; an optional row named "average" is
/// kept in reported_averages instead of the body.
ScoreTable read_score_table(const std::filesystem::path& path);
ScoreTable parse_score_table(const std::string& csv_text);

/// CSV with the computed average row appended; values printed with 6 decimals.
std::string format_table_csv(const ScoreTable& table);
/// Aligned text table; the best value per row is wrapped in **...**, the
/// average row appended, and `footnotes` printed underneath.
std::string format_table_text(const ScoreTable& table, const std::vector<std::string>& footnotes = {});

/// One (image, part, variant) evaluation.
struct RunResult {
  std::string image_id;
  std::string part_class;
  std::string variant;
  IoUCounts counts;
};

struct IoUReport {
  /// Pooled IoU (headline).
  ScoreTable pooled;
  /// Mean of per-image IoU.
  ScoreTable per_image_mean;
  /// (part, variant) -> image -> IoU.
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> per_image;
  std::vector<std::string> footnotes;
};

/// Builds the part x variant report. Throws when some (part, variant) cell
/// has no runs at all.
IoUReport variant_table(std::span<const RunResult> runs, const std::vector<std::string>& part_order = {},
                        const std::vector<std::string>& variant_order = {});

struct FusionSelection {
  std::map<std::string, std::string> chosen;  // part -> column
  double average = 0.0;
  double lower = 0.0;  // worst column per part
  double upper = 0.0;  // best column per part
};

/// Picks the best candidate column per row (earlier candidate on ties).
FusionSelection fuse_best_per_part(const ScoreTable& table, const std::vector<std::string>& candidates);

/// IoU counts per image x part x variant.
class PerImageScores {
 public:
  PerImageScores(std::vector<std::string> images, std::vector<std::string> parts,
                 std::vector<std::string> variants);

  const std::vector<std::string>& images() const { return images_; }
  const std::vector<std::string>& parts() const { return parts_; }
  const std::vector<std::string>& variants() const { return variants_; }

  IoUCounts& at(std::size_t image, std::size_t part, std::size_t variant);
  const IoUCounts& at(std::size_t image, std::size_t part, std::size_t variant) const;

  /// Pooled IoU of (part, variant) over the given images.
  double pooled(std::span<const std::size_t> images, std::size_t part, std::size_t variant) const;

  /// Per part, the variant with the best pooled IoU on `images` (earlier
  /// variant on ties).
  std::vector<std::size_t> select(std::span<const std::size_t> images) const;

  /// Mean over parts of the pooled full-set IoU of the picked variants.
  double evaluate(std::span<const std::size_t> picks) const;

  /// Builds a table from per-image IoU values with equal unions, so pooling
  /// equals the per-image mean. Input indexed [image][part][variant].
  static PerImageScores from_iou_values(std::vector<std::string> images, std::vector<std::string> parts,
                                        std::vector<std::string> variants,
                                        const std::vector<std::vector<std::vector<double>>>& values);

 private:
  std::vector<std::string> images_, parts_, variants_;
  std::vector<IoUCounts> cells_;
};

struct SelectionPoint {
  std::size_t sample_size = 0;
  std::vector<double> values;  // one per repetition
  std::vector<std::uint64_t> seeds;
  double mean = 0.0;
  double stddev = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// For each n: repeat `repetitions` times {draw n images without replacement,
/// pick the per-part best variant on the draw, score the picks on the full
/// set}. Repetition r uses seed + r and draws a prefix of one shuffled
/// order, so samples are nested across n.
std::vector<SelectionPoint> selection_experiment(const PerImageScores& scores,
                                                 const std::vector<std::size_t>& sample_sizes,
                                                 std::size_t repetitions, std::uint64_t seed);

/// CSV `image_id,part,variant,intersection,union`, one line per cell.
std::string per_image_csv(const PerImageScores& scores);
/// Inverse of per_image_csv; every (image, part, variant) must appear once.
PerImageScores parse_per_image_csv(const std::string& text);

std::string selection_curve_csv(const std::vector<SelectionPoint>& curve, std::uint64_t seed);

/// A scored detection for threshold sweeps.
struct ScoredInstance {
  double confidence = 0.0;
  BinaryGrid mask;
};

struct SweepItem {
  std::string image_id;
  std::string part_class;
  BinaryGrid ground_truth;
  std::vector<ScoredInstance> instances;
};

/// Pooled IoU per part for each threshold; a prediction keeps instances with
/// confidence > threshold. Columns are the thresholds printed with %g.
ScoreTable threshold_sweep(std::span<const SweepItem> items, const std::vector<double>& thresholds);

/// Fixed-precision number formatting used by every report.
std::string format_fixed(double v, int decimals = 6);

}  // namespace partguide
