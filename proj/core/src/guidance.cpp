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

#include "partguide/guidance.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "partguide/error.hpp"

namespace partguide {
namespace {

constexpr std::array kAllVariants{Variant::kGGSAM,      Variant::kCGSAM,      Variant::kLGSAM,
                                  Variant::kPatchNaive, Variant::kPatchGGSAM, Variant::kPatchCGSAM};

std::string canonical(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::span<const Variant> all_variants() { return kAllVariants; }
std::span<const Variant> roi_variants() { return std::span(kAllVariants).first(3); }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kGGSAM: return "ggsam";
    case Variant::kCGSAM: return "cgsam";
    case Variant::kLGSAM: return "lgsam";
    case Variant::kPatchNaive: return "patch-naive";
    case Variant::kPatchGGSAM: return "patch-ggsam";
    case Variant::kPatchCGSAM: return "patch-cgsam";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view text) {
  const auto key = canonical(text);
  for (auto v : kAllVariants) {
    if (canonical(to_string(v)) == key) return v;
  }
  if (key == "naive") return Variant::kPatchNaive;
  return std::nullopt;
}

bool groups_patches(Variant v) {
  return v == Variant::kGGSAM || v == Variant::kCGSAM || v == Variant::kLGSAM;
}

DisjointSet::DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
  std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t DisjointSet::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool DisjointSet::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (size_[a] < size_[b]) std::swap(a, b);
  parent_[b] = a;
  size_[a] += size_[b];
  return true;
}

std::vector<int> threshold_patches(std::span<const double> confidences, double threshold) {
  std::vector<int> out;
  for (std::size_t p = 0; p < confidences.size(); ++p) {
    if (confidences[p] > threshold) out.push_back(static_cast<int>(p));
  }
  return out;
}

std::vector<PromptedRegion> group_rois(std::span<const Patch> selected) {
  const std::size_t n = selected.size();
  for (const auto& p : selected) {
    if (p.box.empty()) fail(ErrorCode::kInvalidArgument, "patch " + std::to_string(p.index) + " has an empty box");
  }
  // Sweep along x: only pairs whose x-extents overlap can intersect.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(selected[a].box.x0, selected[a].index) <
           std::tie(selected[b].box.x0, selected[b].index);
  });
  DisjointSet sets(n);
  for (std::size_t a = 0; a < n; ++a) {
    const Box& ba = selected[order[a]].box;
    for (std::size_t b = a + 1; b < n && selected[order[b]].box.x0 < ba.x1; ++b) {
      if (intersection_area(ba, selected[order[b]].box) > 0) sets.unite(order[a], order[b]);
    }
  }

  std::vector<PromptedRegion> regions;
  std::vector<std::size_t> region_of(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = sets.find(i);
    if (region_of[root] == n) {
      region_of[root] = regions.size();
      regions.push_back({selected[i].box, std::nullopt, std::nullopt, {}, 0.0});
    }
    auto& r = regions[region_of[root]];
    r.roi = bounding_union(r.roi, selected[i].box);
    r.member_patches.push_back(selected[i].index);
  }
  for (auto& r : regions) std::sort(r.member_patches.begin(), r.member_patches.end());
  std::sort(regions.begin(), regions.end(), [](const PromptedRegion& a, const PromptedRegion& b) {
    return std::tie(a.roi.x0, a.roi.y0, a.roi.x1, a.roi.y1, a.member_patches.front()) <
           std::tie(b.roi.x0, b.roi.y0, b.roi.x1, b.roi.y1, b.member_patches.front());
  });
  return regions;
}

PromptedRegion infer_prompt(PromptedRegion region, std::span<const Patch> patches,
                            std::span<const double> confidences, PromptMode mode) {
  if (region.member_patches.empty()) fail(ErrorCode::kInvalidArgument, "region has no members");
  int best = -1;
  double best_c = -std::numeric_limits<double>::infinity();
  for (int idx : region.member_patches) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= confidences.size() ||
        std::isnan(confidences[static_cast<std::size_t>(idx)])) {
      fail(ErrorCode::kNotFound, "no confidence for patch " + std::to_string(idx));
    }
    if (static_cast<std::size_t>(idx) >= patches.size() || patches[static_cast<std::size_t>(idx)].index != idx) {
      fail(ErrorCode::kNotFound, "no box for patch " + std::to_string(idx));
    }
    const double c = confidences[static_cast<std::size_t>(idx)];
    if (c > best_c || (c == best_c && idx < best)) {
      best_c = c;
      best = idx;
    }
  }
  region.peak_confidence = best_c;
  region.point = mode == PromptMode::kLikelihood ? patches[static_cast<std::size_t>(best)].box.center()
                                                 : region.roi.center();
  return region;
}

std::vector<double> patch_confidences(const PatchGrid& grid, const FeatureBlob& features,
                                      const GuidanceModel& model) {
  if (model.feature_dim == 0) fail(ErrorCode::kInvalidArgument, "guidance model is untrained");
  if (features.size() > 0 && features.dim() != model.feature_dim) {
    fail(ErrorCode::kInvalidArgument, "feature dim " + std::to_string(features.dim()) +
                                          " does not match model dim " + std::to_string(model.feature_dim));
  }
  std::vector<double> conf(grid.size());
  for (const auto& p : grid.patches) {
    conf[static_cast<std::size_t>(p.index)] = model.predict(features.row({grid.image_id, p.index}));
  }
  return conf;
}

std::vector<PromptedRegion> guide(const PatchGrid& grid, std::span<const double> confidences,
                                  Variant variant, double threshold,
                                  const std::string& part_class) {
  if (confidences.size() != grid.size()) {
    fail(ErrorCode::kInvalidArgument, "confidence count does not match grid size");
  }
  const auto selected_idx = threshold_patches(confidences, threshold);
  std::vector<PromptedRegion> regions;
  if (groups_patches(variant)) {
    std::vector<Patch> selected;
    selected.reserve(selected_idx.size());
    for (int i : selected_idx) selected.push_back(grid.patches[static_cast<std::size_t>(i)]);
    regions = group_rois(selected);
  } else {
    for (int i : selected_idx) {
      regions.push_back({grid.patches[static_cast<std::size_t>(i)].box, std::nullopt, std::nullopt, {i}, 0.0});
    }
  }
  for (auto& r : regions) {
    const auto mode = variant == Variant::kLGSAM ? PromptMode::kLikelihood : PromptMode::kCenter;
    r = infer_prompt(std::move(r), grid.patches, confidences, mode);
    switch (variant) {
      case Variant::kGGSAM:
      case Variant::kPatchGGSAM:
        r.point.reset();
        r.text = part_class;
        break;
      case Variant::kPatchNaive:
        r.point.reset();
        break;
      default:
        break;
    }
  }
  return regions;
}

std::vector<PromptedRegion> run_guidance(const PatchGrid& grid, const FeatureBlob& features,
                                         const GuidanceModel& model, Variant variant,
                                         double threshold) {
  const auto conf = patch_confidences(grid, features, model);
  return guide(grid, conf, variant, threshold, model.part_class);
}

}  // namespace partguide
