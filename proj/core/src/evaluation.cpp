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

#include "partguide/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "io.hpp"
#include "partguide/error.hpp"
#include "partguide/rng.hpp"

namespace partguide {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// --- IoU -------------------------------------------------------------------

IoUCounts iou_counts(const BinaryGrid& pred, const BinaryGrid& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    fail(ErrorCode::kInvalidArgument, "IoU of differently sized masks");
  }
  IoUCounts c;
  const auto& a = pred.cells();
  const auto& b = gt.cells();
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.intersection += a[i] & b[i];
    c.union_ += a[i] | b[i];
  }
  return c;
}

IoUCounts iou_counts(const SegmentMask& pred, const SegmentMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    fail(ErrorCode::kInvalidArgument, "IoU of differently sized masks");
  }
  validate_runs(pred.runs, pred.width, pred.height);
  validate_runs(gt.runs, gt.width, gt.height);
  std::int64_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < pred.runs.size() && j < gt.runs.size()) {
    const auto& a = pred.runs[i];
    const auto& b = gt.runs[j];
    const auto lo = std::max(a.start, b.start);
    const auto hi = std::min(a.start + a.length, b.start + b.length);
    if (hi > lo) inter += hi - lo;
    if (a.start + a.length < b.start + b.length) ++i; else ++j;
  }
  return {inter, pred.popcount() + gt.popcount() - inter};
}

double iou(const BinaryGrid& pred, const BinaryGrid& gt) { return iou_counts(pred, gt).iou(); }
double iou(const SegmentMask& pred, const SegmentMask& gt) { return iou_counts(pred, gt).iou(); }

// --- ScoreTable ------------------------------------------------------------

ScoreTable::ScoreTable(std::vector<std::string> rows, std::vector<std::string> columns)
    : rows_(std::move(rows)), columns_(std::move(columns)), cells_(rows_.size() * columns_.size(), kMissing) {}

bool ScoreTable::has(std::size_t r, std::size_t c) const { return !std::isnan(cells_[r * columns_.size() + c]); }

double ScoreTable::at(std::size_t r, std::size_t c) const {
  if (!has(r, c)) fail(ErrorCode::kNotFound, "missing cell (" + rows_[r] + ", " + columns_[c] + ")");
  return cells_[r * columns_.size() + c];
}

double ScoreTable::at(const std::string& row, const std::string& column) const {
  return at(row_index(row), column_index(column));
}

void ScoreTable::set(std::size_t r, std::size_t c, double v) { cells_[r * columns_.size() + c] = v; }

void ScoreTable::set(const std::string& row, const std::string& column, double v) {
  set(row_index(row), column_index(column), v);
}

std::size_t ScoreTable::row_index(const std::string& row) const {
  const auto it = std::find(rows_.begin(), rows_.end(), row);
  if (it == rows_.end()) fail(ErrorCode::kNotFound, "table has no row '" + row + "'");
  return static_cast<std::size_t>(it - rows_.begin());
}

std::size_t ScoreTable::column_index(const std::string& column) const {
  const auto it = std::find(columns_.begin(), columns_.end(), column);
  if (it == columns_.end()) fail(ErrorCode::kNotFound, "table has no column '" + column + "'");
  return static_cast<std::size_t>(it - columns_.begin());
}

void ScoreTable::require_complete() const {
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (!has(r, c)) fail(ErrorCode::kNotFound, "missing cell (" + rows_[r] + ", " + columns_[c] + ")");
    }
  }
}

double ScoreTable::column_average(std::size_t c) const {
  if (rows_.empty()) fail(ErrorCode::kInvalidArgument, "average of an empty table");
  double sum = 0.0;
  for (std::size_t r = 0; r < rows_.size(); ++r) sum += at(r, c);
  return sum / static_cast<double>(rows_.size());
}

std::vector<double> ScoreTable::averages() const {
  std::vector<double> out;
  for (std::size_t c = 0; c < columns_.size(); ++c) out.push_back(column_average(c));
  return out;
}

std::size_t ScoreTable::best_column(std::size_t r) const {
  std::size_t best = 0;
  for (std::size_t c = 1; c < columns_.size(); ++c) {
    if (at(r, c) > at(r, best)) best = c;
  }
  return best;
}

std::size_t ScoreTable::best_average_column() const {
  const auto avg = averages();
  return static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin());
}

ScoreTable parse_score_table(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty() || detail::trim(line).front() == '#') continue;
    rows.push_back(detail::split_csv_line(line));
  }
  if (rows.empty() || rows.front().size() < 2) fail(ErrorCode::kFormat, "score table needs a header with columns");
  std::vector<std::string> columns(rows.front().begin() + 1, rows.front().end());
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
  std::optional<std::vector<double>> reported;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != columns.size() + 1) {
      fail(ErrorCode::kFormat, "score table row '" + row.front() + "' has " + std::to_string(row.size() - 1) +
                                   " values, expected " + std::to_string(columns.size()));
    }
    std::vector<double> v;
    for (std::size_t c = 1; c < row.size(); ++c) {
      v.push_back(row[c].empty() ? kMissing : detail::parse_double(row[c], row.front()));
    }
    if (row.front() == "average") {
      reported = std::move(v);
      continue;
    }
    if (!seen.insert(row.front()).second) fail(ErrorCode::kFormat, "duplicate row '" + row.front() + "'");
    names.push_back(row.front());
    values.push_back(std::move(v));
  }
  ScoreTable t(names, columns);
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) t.set(r, c, values[r][c]);
  }
  t.reported_averages = std::move(reported);
  return t;
}

ScoreTable read_score_table(const std::filesystem::path& path) {
  try {
    return parse_score_table(detail::read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string format_table_csv(const ScoreTable& table) {
  std::ostringstream out;
  out << "part";
  for (const auto& c : table.columns()) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    out << table.rows()[r];
    for (std::size_t c = 0; c < table.columns().size(); ++c) {
      out << ',' << (table.has(r, c) ? format_fixed(table.at(r, c)) : "");
    }
    out << '\n';
  }
  if (!table.rows().empty()) {
    out << "average";
    for (double a : table.averages()) out << ',' << format_fixed(a);
    out << '\n';
  }
  return out.str();
}

std::string format_table_text(const ScoreTable& table, const std::vector<std::string>& footnotes) {
  std::size_t name_w = std::string("average").size();
  for (const auto& r : table.rows()) name_w = std::max(name_w, r.size());
  std::vector<std::size_t> col_w;
  for (const auto& c : table.columns()) col_w.push_back(std::max<std::size_t>(c.size(), 9));

  std::ostringstream out;
  const auto pad = [&](const std::string& s, std::size_t w, bool left) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    out << (left ? s + fill : fill + s);
  };
  pad("", name_w, true);
  for (std::size_t c = 0; c < col_w.size(); ++c) {
    out << "  ";
    pad(table.columns()[c], col_w[c], false);
  }
  out << '\n';
  const auto row_line = [&](const std::string& name, const std::vector<double>& vals, std::size_t best) {
    pad(name, name_w, true);
    for (std::size_t c = 0; c < vals.size(); ++c) {
      out << "  ";
      std::string cell = std::isnan(vals[c]) ? "-" : format_fixed(vals[c], 3);
      if (c == best) cell = "**" + cell + "**";
      pad(cell, col_w[c], false);
    }
    out << '\n';
  };
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    std::vector<double> vals;
    bool complete = true;
    for (std::size_t c = 0; c < table.columns().size(); ++c) {
      vals.push_back(table.has(r, c) ? table.at(r, c) : kMissing);
      complete = complete && table.has(r, c);
    }
    row_line(table.rows()[r], vals, complete ? table.best_column(r) : vals.size());
  }
  if (!table.rows().empty()) {
    out << std::string(name_w + col_w.size() * 2 + std::accumulate(col_w.begin(), col_w.end(), std::size_t{0}), '-')
        << '\n';
    row_line("average", table.averages(), table.best_average_column());
  }
  for (const auto& f : footnotes) out << "  * " << f << '\n';
  return out.str();
}

// --- variant report --------------------------------------------------------

IoUReport variant_table(std::span<const RunResult> runs, const std::vector<std::string>& part_order,
                        const std::vector<std::string>& variant_order) {
  std::vector<std::string> parts = part_order, variants = variant_order;
  const auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : runs) {
    remember(parts, r.part_class);
    remember(variants, r.variant);
  }
  IoUReport report;
  report.pooled = ScoreTable(parts, variants);
  report.per_image_mean = ScoreTable(parts, variants);
  std::map<std::pair<std::string, std::string>, IoUCounts> pooled;
  bool empty_pair = false;
  for (const auto& r : runs) {
    pooled[{r.part_class, r.variant}] += r.counts;
    report.per_image[{r.part_class, r.variant}][r.image_id] = r.counts.iou();
    empty_pair = empty_pair || r.counts.union_ == 0;
  }
  for (const auto& p : parts) {
    for (const auto& v : variants) {
      const auto it = pooled.find({p, v});
      if (it == pooled.end()) fail(ErrorCode::kNotFound, "no runs for (" + p + ", " + v + ")");
      report.pooled.set(p, v, it->second.iou());
      const auto& imgs = report.per_image.at({p, v});
      double sum = 0.0;
      for (const auto& [id, x] : imgs) sum += x;
      report.per_image_mean.set(p, v, sum / static_cast<double>(imgs.size()));
    }
  }
  report.footnotes.push_back("IoU pooled over images (sum of intersections / sum of unions)");
  if (empty_pair) report.footnotes.push_back("empty prediction vs empty ground truth counts as IoU 1.0");
  return report;
}

FusionSelection fuse_best_per_part(const ScoreTable& table, const std::vector<std::string>& candidates) {
  if (candidates.empty()) fail(ErrorCode::kInvalidArgument, "no candidate columns");
  if (table.rows().empty()) fail(ErrorCode::kInvalidArgument, "empty table");
  std::vector<std::size_t> cols;
  for (const auto& c : candidates) cols.push_back(table.column_index(c));
  FusionSelection sel;
  double sum = 0.0, lo = 0.0, hi = 0.0;
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    std::size_t best = cols.front();
    double worst = table.at(r, cols.front());
    for (auto c : cols) {
      if (table.at(r, c) > table.at(r, best)) best = c;
      worst = std::min(worst, table.at(r, c));
    }
    sel.chosen[table.rows()[r]] = table.columns()[best];
    sum += table.at(r, best);
    hi += table.at(r, best);
    lo += worst;
  }
  const double n = static_cast<double>(table.rows().size());
  sel.average = sum / n;
  sel.upper = hi / n;
  sel.lower = lo / n;
  return sel;
}

// --- selection experiment --------------------------------------------------

PerImageScores::PerImageScores(std::vector<std::string> images, std::vector<std::string> parts,
                               std::vector<std::string> variants)
    : images_(std::move(images)), parts_(std::move(parts)), variants_(std::move(variants)),
      cells_(images_.size() * parts_.size() * variants_.size()) {}

IoUCounts& PerImageScores::at(std::size_t image, std::size_t part, std::size_t variant) {
  return cells_[(image * parts_.size() + part) * variants_.size() + variant];
}

const IoUCounts& PerImageScores::at(std::size_t image, std::size_t part, std::size_t variant) const {
  return cells_[(image * parts_.size() + part) * variants_.size() + variant];
}

double PerImageScores::pooled(std::span<const std::size_t> images, std::size_t part, std::size_t variant) const {
  IoUCounts sum;
  for (auto i : images) sum += at(i, part, variant);
  return sum.iou();
}

std::vector<std::size_t> PerImageScores::select(std::span<const std::size_t> images) const {
  std::vector<std::size_t> picks(parts_.size(), 0);
  for (std::size_t p = 0; p < parts_.size(); ++p) {
    double best = -1.0;
    for (std::size_t v = 0; v < variants_.size(); ++v) {
      const double s = pooled(images, p, v);
      if (s > best) {
        best = s;
        picks[p] = v;
      }
    }
  }
  return picks;
}

double PerImageScores::evaluate(std::span<const std::size_t> picks) const {
  std::vector<std::size_t> all(images_.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  double sum = 0.0;
  for (std::size_t p = 0; p < parts_.size(); ++p) sum += pooled(all, p, picks[p]);
  return sum / static_cast<double>(parts_.size());
}

PerImageScores PerImageScores::from_iou_values(std::vector<std::string> images, std::vector<std::string> parts,
                                               std::vector<std::string> variants,
                                               const std::vector<std::vector<std::vector<double>>>& values) {
  PerImageScores s(std::move(images), std::move(parts), std::move(variants));
  // Scale to integer counts: iou * 1e9 / 1e9 keeps pooled == mean of values.
  constexpr double kScale = 1e9;
  for (std::size_t i = 0; i < s.images_.size(); ++i) {
    for (std::size_t p = 0; p < s.parts_.size(); ++p) {
      for (std::size_t v = 0; v < s.variants_.size(); ++v) {
        const double x = values.at(i).at(p).at(v);
        if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::kInvalidArgument, "IoU value outside [0,1]");
        s.at(i, p, v) = {static_cast<std::int64_t>(std::llround(x * kScale)), static_cast<std::int64_t>(kScale)};
      }
    }
  }
  return s;
}

std::vector<SelectionPoint> selection_experiment(const PerImageScores& scores,
                                                 const std::vector<std::size_t>& sample_sizes,
                                                 std::size_t repetitions, std::uint64_t seed) {
  const std::size_t n_images = scores.images().size();
  if (scores.parts().empty() || scores.variants().empty()) {
    fail(ErrorCode::kInvalidArgument, "selection experiment needs parts and variants");
  }
  if (repetitions == 0) fail(ErrorCode::kInvalidArgument, "repetitions must be >= 1");
  for (auto n : sample_sizes) {
    if (n == 0 || n > n_images) {
      fail(ErrorCode::kInvalidArgument, "sample size " + std::to_string(n) + " outside [1, " +
                                            std::to_string(n_images) + "]");
    }
  }
  std::vector<std::size_t> all(n_images);
  std::iota(all.begin(), all.end(), std::size_t{0});

  // Bounds: best / worst variant per part on the full set.
  double upper = 0.0, lower = 0.0;
  for (std::size_t p = 0; p < scores.parts().size(); ++p) {
    double hi = -1.0, lo = 2.0;
    for (std::size_t v = 0; v < scores.variants().size(); ++v) {
      const double s = scores.pooled(all, p, v);
      hi = std::max(hi, s);
      lo = std::min(lo, s);
    }
    upper += hi;
    lower += lo;
  }
  upper /= static_cast<double>(scores.parts().size());
  lower /= static_cast<double>(scores.parts().size());

  std::vector<std::vector<std::size_t>> orders(repetitions, all);
  std::vector<std::uint64_t> seeds(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    seeds[r] = seed + r;
    Rng rng(seeds[r]);
    rng.shuffle(std::span(orders[r]));
  }

  std::vector<SelectionPoint> curve;
  for (auto n : sample_sizes) {
    SelectionPoint pt;
    pt.sample_size = n;
    pt.seeds = seeds;
    pt.lower = lower;
    pt.upper = upper;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const std::span<const std::size_t> sample(orders[r].data(), n);
      pt.values.push_back(scores.evaluate(scores.select(sample)));
    }
    const double k = static_cast<double>(repetitions);
    pt.mean = std::accumulate(pt.values.begin(), pt.values.end(), 0.0) / k;
    double ss = 0.0;
    for (double v : pt.values) ss += (v - pt.mean) * (v - pt.mean);
    pt.stddev = repetitions > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
    curve.push_back(std::move(pt));
  }
  return curve;
}

std::string per_image_csv(const PerImageScores& scores) {
  std::ostringstream out;
  out << "image_id,part,variant,intersection,union\n";
  for (std::size_t i = 0; i < scores.images().size(); ++i) {
    for (std::size_t p = 0; p < scores.parts().size(); ++p) {
      for (std::size_t v = 0; v < scores.variants().size(); ++v) {
        const auto& c = scores.at(i, p, v);
        out << scores.images()[i] << ',' << scores.parts()[p] << ',' << scores.variants()[v] << ','
            << c.intersection << ',' << c.union_ << '\n';
      }
    }
  }
  return out.str();
}

PerImageScores parse_per_image_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (header) {
      if (fields != std::vector<std::string>{"image_id", "part", "variant", "intersection", "union"}) {
        fail(ErrorCode::kFormat, "per-image CSV header must be image_id,part,variant,intersection,union");
      }
      header = false;
      continue;
    }
    if (fields.size() != 5) fail(ErrorCode::kFormat, "per-image CSV row needs 5 fields: " + line);
    rows.push_back(std::move(fields));
  }
  std::vector<std::string> images, parts, variants;
  const auto remember = [](std::vector<std::string>& v, const std::string& s) {
    const auto it = std::find(v.begin(), v.end(), s);
    if (it != v.end()) return static_cast<std::size_t>(it - v.begin());
    v.push_back(s);
    return v.size() - 1;
  };
  for (const auto& r : rows) {
    remember(images, r[0]);
    remember(parts, r[1]);
    remember(variants, r[2]);
  }
  PerImageScores scores(images, parts, variants);
  std::vector<char> seen(images.size() * parts.size() * variants.size(), 0);
  for (const auto& r : rows) {
    const auto i = remember(images, r[0]), p = remember(parts, r[1]), v = remember(variants, r[2]);
    auto& flag = seen[(i * parts.size() + p) * variants.size() + v];
    if (flag) fail(ErrorCode::kFormat, "duplicate per-image row (" + r[0] + ", " + r[1] + ", " + r[2] + ")");
    flag = 1;
    const IoUCounts c{detail::parse_int(r[3], "intersection"), detail::parse_int(r[4], "union")};
    if (c.intersection < 0 || c.union_ < c.intersection) {
      fail(ErrorCode::kFormat, "invalid counts for (" + r[0] + ", " + r[1] + ", " + r[2] + ")");
    }
    scores.at(i, p, v) = c;
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      for (std::size_t v = 0; v < variants.size(); ++v) {
        if (!seen[(i * parts.size() + p) * variants.size() + v]) {
          fail(ErrorCode::kFormat, "missing per-image row (" + images[i] + ", " + parts[p] + ", " + variants[v] + ")");
        }
      }
    }
  }
  return scores;
}

std::string selection_curve_csv(const std::vector<SelectionPoint>& curve, std::uint64_t seed) {
  std::ostringstream out;
  out << "# seed=" << seed << '\n';
  out << "sample_size,mean,stddev,lower,upper,repetitions\n";
  for (const auto& p : curve) {
    out << p.sample_size << ',' << format_fixed(p.mean) << ',' << format_fixed(p.stddev) << ','
        << format_fixed(p.lower) << ',' << format_fixed(p.upper) << ',' << p.values.size() << '\n';
  }
  return out.str();
}

// --- threshold sweep -------------------------------------------------------

ScoreTable threshold_sweep(std::span<const SweepItem> items, const std::vector<double>& thresholds) {
  if (thresholds.empty()) fail(ErrorCode::kInvalidArgument, "threshold list is empty");
  std::vector<std::string> parts, cols;
  for (const auto& it : items) {
    if (std::find(parts.begin(), parts.end(), it.part_class) == parts.end()) parts.push_back(it.part_class);
  }
  for (double t : thresholds) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", t);
    cols.emplace_back(buf);
  }
  ScoreTable table(parts, cols);
  for (std::size_t c = 0; c < thresholds.size(); ++c) {
    std::map<std::string, IoUCounts> pooled;
    for (const auto& it : items) {
      BinaryGrid pred(it.ground_truth.width(), it.ground_truth.height());
      for (const auto& inst : it.instances) {
        if (inst.confidence > thresholds[c]) pred.merge(inst.mask);
      }
      pooled[it.part_class] += iou_counts(pred, it.ground_truth);
    }
    for (const auto& [part, counts] : pooled) table.set(part, cols[c], counts.iou());
  }
  return table;
}

}  // namespace partguide
