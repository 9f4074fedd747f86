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

#include "partguide/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "io.hpp"
#include "partguide/error.hpp"
#include "partguide/rng.hpp"

namespace partguide {
namespace {

using Matrix = std::vector<double>;  // row-major n x dim

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void normalize(double* v, std::size_t dim) {
  double norm = 0.0;
  for (std::size_t i = 0; i < dim; ++i) norm += v[i] * v[i];
  norm = std::sqrt(norm);
  if (norm <= 0.0) return;
  for (std::size_t i = 0; i < dim; ++i) v[i] /= norm;
}

class KMeans {
 public:
  KMeans(const FeatureBlob& blob, const ClusterConfig& config)
      : n_(blob.size()), dim_(blob.dim()), k_(static_cast<std::size_t>(config.k)),
        config_(config), rng_(config.seed) {
    points_.resize(n_ * dim_);
    for (std::size_t r = 0; r < n_; ++r) {
      const auto row = blob.row(r);
      std::copy(row.begin(), row.end(), points_.begin() + static_cast<std::ptrdiff_t>(r * dim_));
      normalize(point(r), dim_);
    }
    centroids_.assign(k_ * dim_, 0.0);
    assignment_.assign(n_, 0);
  }

  void run() {
    seed_plus_plus();
    for (int iter = 0; iter < config_.max_iterations; ++iter) {
      assign(/*sticky=*/false);
      fix_empty_clusters();
      const double shift = update_centroids();
      if (shift < config_.tolerance) break;
    }
    // Final pass: membership must be optimal for the reported centroids.
    for (std::size_t round = 0; round < 2 * n_ + 2; ++round) {
      const bool moved = assign(/*sticky=*/true);
      const bool refilled = fix_empty_clusters();
      if (!moved && !refilled) break;
    }
  }

  std::vector<Prototype> prototypes(const FeatureBlob& blob) const {
    std::vector<Prototype> out(k_);
    for (std::size_t c = 0; c < k_; ++c) {
      out[c].id = static_cast<int>(c);
      out[c].centroid.assign(centroid(c), centroid(c) + dim_);
    }
    for (std::size_t r = 0; r < n_; ++r) out[assignment_[r]].members.push_back(blob.key(r));
    return out;
  }

 private:
  double* point(std::size_t r) { return points_.data() + r * dim_; }
  const double* point(std::size_t r) const { return points_.data() + r * dim_; }
  double* centroid(std::size_t c) { return centroids_.data() + c * dim_; }
  const double* centroid(std::size_t c) const { return centroids_.data() + c * dim_; }

  void set_centroid(std::size_t c, std::size_t r) {
    std::copy(point(r), point(r) + dim_, centroid(c));
  }

  void seed_plus_plus() {
    std::vector<bool> chosen(n_, false);
    std::size_t first = rng_.below(n_);
    set_centroid(0, first);
    chosen[first] = true;
    std::vector<double> d2(n_);
    for (std::size_t r = 0; r < n_; ++r) d2[r] = squared_distance(point(r), centroid(0), dim_);
    for (std::size_t c = 1; c < k_; ++c) {
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      std::size_t pick = n_;
      if (total > 0.0) {
        double target = rng_.uniform() * total;
        for (std::size_t r = 0; r < n_; ++r) {
          if (d2[r] <= 0.0) continue;
          pick = r;
          target -= d2[r];
          if (target < 0.0) break;
        }
      }
      if (pick == n_) {
        // Remaining points coincide with existing centroids.
        for (std::size_t r = 0; r < n_; ++r) {
          if (!chosen[r]) {
            pick = r;
            break;
          }
        }
      }
      chosen[pick] = true;
      set_centroid(c, pick);
      for (std::size_t r = 0; r < n_; ++r) {
        d2[r] = std::min(d2[r], squared_distance(point(r), centroid(c), dim_));
      }
    }
  }

  /// Nearest-centroid assignment. With `sticky`, a point only moves when
  /// another centroid is strictly closer than its current one.
  bool assign(bool sticky) {
    bool moved = false;
    for (std::size_t r = 0; r < n_; ++r) {
      std::size_t best = sticky ? assignment_[r] : 0;
      double best_d = squared_distance(point(r), centroid(best), dim_);
      for (std::size_t c = 0; c < k_; ++c) {
        const double d = squared_distance(point(r), centroid(c), dim_);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != assignment_[r]) moved = true;
      assignment_[r] = best;
    }
    return moved;
  }

  /// Re-seeds each empty cluster with the point farthest from its centroid
  /// (taken from a cluster that keeps at least one member).
  bool fix_empty_clusters() {
    bool changed = false;
    std::vector<std::size_t> counts(k_, 0);
    for (auto a : assignment_) ++counts[a];
    for (std::size_t c = 0; c < k_; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n_;
      double far_d = -1.0;
      for (std::size_t r = 0; r < n_; ++r) {
        if (counts[assignment_[r]] <= 1) continue;
        const double d = squared_distance(point(r), centroid(assignment_[r]), dim_);
        if (d > far_d) {
          far_d = d;
          far = r;
        }
      }
      if (far == n_) break;  // cannot happen while k <= n
      --counts[assignment_[far]];
      assignment_[far] = c;
      counts[c] = 1;
      set_centroid(c, far);
      changed = true;
    }
    return changed;
  }

  /// Returns the largest centroid displacement.
  double update_centroids() {
    Matrix sums(k_ * dim_, 0.0);
    std::vector<std::size_t> counts(k_, 0);
    for (std::size_t r = 0; r < n_; ++r) {
      const auto c = assignment_[r];
      ++counts[c];
      for (std::size_t i = 0; i < dim_; ++i) sums[c * dim_ + i] += point(r)[i];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k_; ++c) {
      if (counts[c] == 0) continue;
      double* s = sums.data() + c * dim_;
      for (std::size_t i = 0; i < dim_; ++i) s[i] /= static_cast<double>(counts[c]);
      normalize(s, dim_);
      shift = std::max(shift, std::sqrt(squared_distance(s, centroid(c), dim_)));
      std::copy(s, s + dim_, centroid(c));
    }
    return shift;
  }

  std::size_t n_;
  std::size_t dim_;
  std::size_t k_;
  ClusterConfig config_;
  Rng rng_;
  Matrix points_;
  Matrix centroids_;
  std::vector<std::size_t> assignment_;
};

}  // namespace

std::vector<Prototype> cluster_prototypes(const FeatureBlob& features, const ClusterConfig& config) {
  if (config.k < 1) fail(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (static_cast<std::size_t>(config.k) > features.size()) {
    fail(ErrorCode::kInvalidArgument, "k = " + std::to_string(config.k) + " exceeds patch count " +
                                          std::to_string(features.size()));
  }
  KMeans km(features, config);
  km.run();
  return km.prototypes(features);
}

void score_prototypes(std::span<Prototype> prototypes, const SimilarityScores& scores) {
  for (const auto& cls : scores.classes()) {
    for (auto& p : prototypes) {
      double sum = 0.0;
      for (const auto& m : p.members) {
        const auto s = scores.get(m, cls);
        if (!s) {
          fail(ErrorCode::kNotFound, "no '" + cls + "' similarity score for " + m.image_id + "#" +
                                         std::to_string(m.patch_index));
        }
        sum += *s;
      }
      p.score_per_class[cls] = sum / static_cast<double>(p.members.size());
    }
  }
}

std::vector<std::size_t> rank_prototypes(std::span<const Prototype> prototypes,
                                         const std::string& part_class) {
  std::vector<std::size_t> order(prototypes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (const auto& p : prototypes) {
    if (!p.score_per_class.contains(part_class)) {
      fail(ErrorCode::kNotFound,
           "prototype " + std::to_string(p.id) + " has no score for class '" + part_class + "'");
    }
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = prototypes[a].score_per_class.at(part_class);
    const double sb = prototypes[b].score_per_class.at(part_class);
    if (sa != sb) return sa > sb;
    return prototypes[a].id < prototypes[b].id;
  });
  return order;
}

std::string to_string(LabelSource source) {
  return source == LabelSource::kHuman ? "human" : "simulated";
}

LabelSource parse_label_source(const std::string& text) {
  if (text == "human") return LabelSource::kHuman;
  if (text == "simulated") return LabelSource::kSimulated;
  fail(ErrorCode::kFormat, "unknown label source '" + text + "'");
}

int click_count(std::size_t exception_count) { return 1 + static_cast<int>(exception_count); }

AnnotationRecord simulate_annotation(const Prototype& prototype,
                                     const std::map<PatchKey, bool>& ground_truth,
                                     const std::string& part_class) {
  if (prototype.members.empty()) {
    fail(ErrorCode::kInvalidArgument, "prototype " + std::to_string(prototype.id) + " is empty");
  }
  std::vector<int> positives, negatives;
  for (std::size_t i = 0; i < prototype.members.size(); ++i) {
    const auto it = ground_truth.find(prototype.members[i]);
    if (it == ground_truth.end()) {
      fail(ErrorCode::kNotFound, "no ground-truth label for " + prototype.members[i].image_id +
                                     "#" + std::to_string(prototype.members[i].patch_index));
    }
    (it->second ? positives : negatives).push_back(static_cast<int>(i));
  }
  AnnotationRecord rec;
  rec.prototype_id = prototype.id;
  rec.part_class = part_class;
  rec.bulk_label = positives.size() >= negatives.size();
  rec.exceptions = rec.bulk_label ? negatives : positives;
  rec.clicks = click_count(rec.exceptions.size());
  rec.source = LabelSource::kSimulated;
  return rec;
}

AnnotationRecord normalize_record(const Prototype& prototype, AnnotationRecord record) {
  if (record.prototype_id != prototype.id) {
    fail(ErrorCode::kInvalidArgument, "record is for prototype " +
                                          std::to_string(record.prototype_id) + ", not " +
                                          std::to_string(prototype.id));
  }
  std::sort(record.exceptions.begin(), record.exceptions.end());
  if (std::adjacent_find(record.exceptions.begin(), record.exceptions.end()) !=
      record.exceptions.end()) {
    fail(ErrorCode::kInvalidArgument, "duplicate exception index");
  }
  for (int e : record.exceptions) {
    if (e < 0 || static_cast<std::size_t>(e) >= prototype.members.size()) {
      fail(ErrorCode::kInvalidArgument, "exception index " + std::to_string(e) +
                                            " outside prototype of size " +
                                            std::to_string(prototype.members.size()));
    }
  }
  record.clicks = click_count(record.exceptions.size());
  return record;
}

std::vector<std::pair<PatchKey, bool>> expand_record(const Prototype& prototype,
                                                     const AnnotationRecord& record) {
  const auto rec = normalize_record(prototype, record);
  std::vector<std::pair<PatchKey, bool>> out;
  out.reserve(prototype.members.size());
  std::size_t e = 0;
  for (std::size_t i = 0; i < prototype.members.size(); ++i) {
    bool flipped = false;
    if (e < rec.exceptions.size() && rec.exceptions[e] == static_cast<int>(i)) {
      flipped = true;
      ++e;
    }
    out.emplace_back(prototype.members[i], rec.bulk_label != flipped);
  }
  return out;
}

RetrievalPrecision retrieval_efficacy(std::span<const Prototype> prototypes,
                                      const SimilarityScores& scores,
                                      const std::string& part_class,
                                      const std::set<PatchKey>& positives, std::size_t k) {
  std::vector<std::pair<double, PatchKey>> raw;
  for (const auto& p : prototypes) {
    for (const auto& m : p.members) {
      const auto s = scores.get(m, part_class);
      if (!s) {
        fail(ErrorCode::kNotFound, "no '" + part_class + "' score for " + m.image_id + "#" +
                                       std::to_string(m.patch_index));
      }
      raw.emplace_back(*s, m);
    }
  }
  if (k == 0 || k > raw.size()) {
    fail(ErrorCode::kInvalidArgument, "k = " + std::to_string(k) + " outside [1, " +
                                          std::to_string(raw.size()) + "]");
  }
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::size_t raw_hits = 0;
  for (std::size_t i = 0; i < k; ++i) raw_hits += positives.contains(raw[i].second) ? 1 : 0;

  std::size_t proto_hits = 0, taken = 0;
  for (auto idx : rank_prototypes(prototypes, part_class)) {
    for (const auto& m : prototypes[idx].members) {
      if (taken == k) break;
      proto_hits += positives.contains(m) ? 1 : 0;
      ++taken;
    }
    if (taken == k) break;
  }
  const double kd = static_cast<double>(k);
  return {static_cast<double>(raw_hits) / kd, static_cast<double>(proto_hits) / kd};
}

std::vector<ClassCost> annotation_cost_comparison(std::span<const AnnotationRecord> records,
                                                  const std::map<std::string, PolygonCost>& polygons) {
  std::map<std::string, std::int64_t> clicks;
  for (const auto& r : records) clicks[r.part_class] += r.clicks;
  for (const auto& [cls, n] : clicks) {
    if (!polygons.contains(cls)) {
      fail(ErrorCode::kNotFound, "no polygon costs for class '" + cls + "'");
    }
  }
  std::vector<ClassCost> out;
  for (const auto& [cls, poly] : polygons) {
    if (poly.vertices_per_image.empty()) {
      fail(ErrorCode::kInvalidArgument, "class '" + cls + "' has zero images");
    }
    ClassCost c;
    c.part_class = cls;
    c.images = poly.vertices_per_image.size();
    c.patch_clicks = clicks.contains(cls) ? clicks.at(cls) : 0;
    c.polygon_clicks =
        std::accumulate(poly.vertices_per_image.begin(), poly.vertices_per_image.end(), std::int64_t{0});
    const double n = static_cast<double>(c.images);
    c.patch_per_image = static_cast<double>(c.patch_clicks) / n;
    c.polygon_per_image = static_cast<double>(c.polygon_clicks) / n;
    c.ratio = c.patch_per_image > 0.0 ? c.polygon_per_image / c.patch_per_image
                                      : std::numeric_limits<double>::infinity();
    c.approximate = poly.approximate;
    out.push_back(std::move(c));
  }
  return out;
}

std::int64_t approximate_polygon_vertices(const BinaryGrid& mask) {
  const auto px = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < mask.width() && y < mask.height() && mask.at(x, y);
  };
  std::int64_t vertices = 0;
  for (int y = 0; y <= mask.height(); ++y) {
    for (int x = 0; x <= mask.width(); ++x) {
      const bool a = px(x - 1, y - 1), b = px(x, y - 1), c = px(x - 1, y), d = px(x, y);
      const int set = a + b + c + d;
      if (set == 1 || set == 3) {
        vertices += 1;
      } else if (set == 2 && a == d) {
        vertices += 2;  // diagonal pair: two outline corners meet here
      }
    }
  }
  return vertices;
}

std::string prototypes_to_json(std::span<const Prototype> prototypes, const ClusterConfig& config) {
  nlohmann::ordered_json j;
  j["k"] = config.k;
  j["seed"] = config.seed;
  j["max_iterations"] = config.max_iterations;
  j["tolerance"] = config.tolerance;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : prototypes) {
    nlohmann::ordered_json jp;
    jp["id"] = p.id;
    jp["centroid"] = p.centroid;
    auto members = nlohmann::ordered_json::array();
    for (const auto& m : p.members) members.push_back({m.image_id, m.patch_index});
    jp["members"] = std::move(members);
    auto scores = nlohmann::ordered_json::object();
    for (const auto& [cls, s] : p.score_per_class) scores[cls] = s;
    jp["scores"] = std::move(scores);
    arr.push_back(std::move(jp));
  }
  j["prototypes"] = std::move(arr);
  return j.dump();
}

std::vector<Prototype> prototypes_from_json(const std::string& text) {
  std::vector<Prototype> out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& jp : j.at("prototypes")) {
      Prototype p;
      p.id = jp.at("id").get<int>();
      p.centroid = jp.at("centroid").get<std::vector<double>>();
      for (const auto& m : jp.at("members")) {
        p.members.push_back({m.at(0).get<std::string>(), m.at(1).get<int>()});
      }
      if (p.members.empty()) {
        fail(ErrorCode::kFormat, "prototype " + std::to_string(p.id) + " has no members");
      }
      if (jp.contains("scores")) {
        for (const auto& [cls, s] : jp.at("scores").items()) p.score_per_class[cls] = s.get<double>();
      }
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("prototypes file: ") + e.what());
  }
  return out;
}

std::vector<Prototype> read_prototypes(const std::filesystem::path& path) {
  return prototypes_from_json(detail::read_text_file(path));
}

}  // namespace partguide
