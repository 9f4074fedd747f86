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
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace partguide {

/// Source of kernel matrix rows for the dual solver.
class KernelSource {
 public:
  virtual ~KernelSource() = default;
  virtual std::size_t size() const = 0;
  /// Row i of the kernel matrix. The spans returned by the two most recent
  /// calls stay valid.
  virtual std::span<const double> row(std::size_t i) = 0;
  virtual double diagonal(std::size_t i) const = 0;
};

/// K(x, z) = exp(-gamma * |x - z|^2) over row-major samples, with an LRU
/// cache of computed rows keyed by sample index.
class RbfKernelCache final : public KernelSource {
 public:
  RbfKernelCache(std::span<const float> samples, std::size_t dim, double gamma,
                 std::size_t cache_bytes = std::size_t{256} << 20);

  std::size_t size() const override { return n_; }
  std::span<const double> row(std::size_t i) override;
  double diagonal(std::size_t) const override { return 1.0; }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::span<const float> samples_;
  std::size_t dim_;
  std::size_t n_;
  double gamma_;
  std::size_t capacity_rows_;
  std::vector<std::vector<double>> rows_;
  std::vector<std::size_t> lru_prev_, lru_next_;
  std::size_t lru_head_, cached_ = 0;
  std::size_t hits_ = 0, misses_ = 0;

  void touch(std::size_t i);
  void unlink(std::size_t i);
};

/// Dense precomputed kernel (tests and tiny problems).
class PrecomputedKernel final : public KernelSource {
 public:
  PrecomputedKernel(std::vector<double> matrix, std::size_t n);
  std::size_t size() const override { return n_; }
  std::span<const double> row(std::size_t i) override { return {matrix_.data() + i * n_, n_}; }
  double diagonal(std::size_t i) const override { return matrix_[i * n_ + i]; }

 private:
  std::vector<double> matrix_;
  std::size_t n_;
};

/// Solution of  min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a_i <= upper_i,
/// with Q_ij = y_i y_j K_ij.
struct DualSolution {
  std::vector<double> alpha;
  /// Decision function is sum_i alpha_i y_i K(x_i, x) - rho.
  double rho = 0.0;
  double objective = 0.0;
  /// Largest KKT violation m(a) - M(a) at exit.
  double kkt_violation = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Training decision values derived from the solver's gradient.
  std::vector<double> decision_values;
};

/// SMO with maximal-violating-pair working-set selection.
DualSolution solve_dual(KernelSource& kernel, std::span<const int> labels,
                        std::span<const double> upper_bounds, double tolerance,
                        std::size_t max_iterations);

/// 1/2 a'Qa - e'a evaluated directly (independent of solver state).
double dual_objective(KernelSource& kernel, std::span<const int> labels,
                      std::span<const double> alpha);

struct TrainConfig {
  double C = 1.0;
  /// nullopt selects 1 / (dim * variance of all feature values).
  std::optional<double> gamma;
  double tolerance = 1e-3;
  /// Iteration cap is max_passes * sample count.
  int max_passes = 1000;
  /// Recorded in the model for provenance; SMO itself is deterministic.
  std::uint64_t seed = 7;
  /// C_pos = C * (#neg / #pos).
  bool balance_classes = true;
  std::size_t cache_bytes = std::size_t{256} << 20;
};

/// Labelled patch features for one part class; samples are row-major.
struct TrainingSet {
  std::size_t dim = 0;
  std::vector<float> samples;
  std::vector<int> labels;  // 0 / 1

  std::size_t size() const { return labels.size(); }
  void add(std::span<const float> feature, bool label);
};

/// Per-part RBF-kernel SVM with Platt calibration.
struct GuidanceModel {
  std::string part_class;
  std::size_t feature_dim = 0;
  double gamma = 1.0;
  double C_positive = 1.0;
  double C_negative = 1.0;
  /// Row-major, one row per support vector.
  std::vector<float> support_vectors;
  /// alpha_i * y_i, within [-C_negative, C_positive].
  std::vector<double> dual_coefficients;
  double bias = 0.0;
  double platt_a = 1.0;
  double platt_b = 0.0;
  std::uint64_t seed = 0;

  std::size_t support_count() const { return dual_coefficients.size(); }
  std::span<const float> support_vector(std::size_t i) const {
    return {support_vectors.data() + i * feature_dim, feature_dim};
  }

  /// sum_i coef_i K(sv_i, x) + bias.
  double decision_value(std::span<const float> feature) const;
  /// sigmoid(platt_a * decision_value + platt_b), in [0, 1].
  double predict(std::span<const float> feature) const;
};

struct TrainReport {
  DualSolution dual;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Trains the guidance classifier. Throws on a single-class set, empty
/// set, dimension mismatch or non-finite feature.
GuidanceModel train(const TrainingSet& data, const std::string& part_class,
                    const TrainConfig& config, TrainReport* report = nullptr);

double auto_gamma(const TrainingSet& data);

double sigmoid(double t);

/// Fits c = sigmoid(a * f + b) to decision values by regularised Newton
/// iterations with smoothed targets (Platt scaling). Returns {a, b}.
std::pair<double, double> fit_platt(std::span<const double> decision_values,
                                    std::span<const int> labels);

/// Area under the ROC curve as the Mann-Whitney statistic, ties counted
/// half. Throws unless both labels occur.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Text header line (JSON) followed by a GSFV block holding the support vectors.
std::vector<char> serialize_model(const GuidanceModel& model);
GuidanceModel deserialize_model(std::span<const char> bytes);
void write_model(const std::filesystem::path& path, const GuidanceModel& model);
GuidanceModel read_model(const std::filesystem::path& path);

}  // namespace partguide
