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

#include "partguide/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "io.hpp"
#include "partguide/error.hpp"
#include "partguide/features.hpp"

namespace partguide {
namespace {

constexpr double kTau = 1e-12;

double rbf(const float* a, const float* b, std::size_t dim, double gamma) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

void check_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::kInvalidArgument, "non-finite feature value");
  }
}

}  // namespace

// --- kernels ---------------------------------------------------------------

RbfKernelCache::RbfKernelCache(std::span<const float> samples, std::size_t dim, double gamma,
                               std::size_t cache_bytes)
    : samples_(samples),
      dim_(dim),
      n_(dim == 0 ? 0 : samples.size() / dim),
      gamma_(gamma),
      rows_(n_),
      lru_prev_(n_ + 1),
      lru_next_(n_ + 1),
      lru_head_(n_) {
  const std::size_t row_bytes = std::max<std::size_t>(1, n_ * sizeof(double));
  capacity_rows_ = std::max<std::size_t>(2, cache_bytes / row_bytes);
  lru_prev_[lru_head_] = lru_next_[lru_head_] = lru_head_;
}

void RbfKernelCache::unlink(std::size_t i) {
  lru_next_[lru_prev_[i]] = lru_next_[i];
  lru_prev_[lru_next_[i]] = lru_prev_[i];
}

void RbfKernelCache::touch(std::size_t i) {
  lru_prev_[i] = lru_head_;
  lru_next_[i] = lru_next_[lru_head_];
  lru_prev_[lru_next_[lru_head_]] = i;
  lru_next_[lru_head_] = i;
}

std::span<const double> RbfKernelCache::row(std::size_t i) {
  if (!rows_[i].empty()) {
    ++hits_;
    unlink(i);
    touch(i);
    return rows_[i];
  }
  ++misses_;
  if (cached_ >= capacity_rows_) {
    const std::size_t victim = lru_prev_[lru_head_];
    unlink(victim);
    std::vector<double>().swap(rows_[victim]);
    --cached_;
  }
  auto& r = rows_[i];
  r.resize(n_);
  const float* xi = samples_.data() + i * dim_;
  for (std::size_t j = 0; j < n_; ++j) r[j] = rbf(xi, samples_.data() + j * dim_, dim_, gamma_);
  touch(i);
  ++cached_;
  return r;
}

PrecomputedKernel::PrecomputedKernel(std::vector<double> matrix, std::size_t n)
    : matrix_(std::move(matrix)), n_(n) {
  if (matrix_.size() != n * n) fail(ErrorCode::kInvalidArgument, "kernel matrix is not n x n");
}

// --- SMO -------------------------------------------------------------------

DualSolution solve_dual(KernelSource& kernel, std::span<const int> labels,
                        std::span<const double> upper_bounds, double tolerance,
                        std::size_t max_iterations) {
  const std::size_t n = kernel.size();
  if (labels.size() != n || upper_bounds.size() != n) {
    fail(ErrorCode::kInvalidArgument, "label/bound count does not match kernel size");
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (labels[t] != 1 && labels[t] != -1) fail(ErrorCode::kInvalidArgument, "labels must be +1/-1");
    if (!(upper_bounds[t] > 0.0)) fail(ErrorCode::kInvalidArgument, "box bounds must be positive");
  }

  DualSolution sol;
  auto& alpha = sol.alpha;
  alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);  // Q alpha - e

  const auto in_up = [&](std::size_t t) {
    return labels[t] == 1 ? alpha[t] < upper_bounds[t] : alpha[t] > 0.0;
  };
  const auto in_low = [&](std::size_t t) {
    return labels[t] == 1 ? alpha[t] > 0.0 : alpha[t] < upper_bounds[t];
  };

  double violation = 0.0;
  std::size_t iter = 0;
  for (;; ++iter) {
    std::size_t i = n, j = n;
    double m = -std::numeric_limits<double>::infinity();
    double big_m = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -labels[t] * grad[t];
      if (in_up(t) && v > m) {
        m = v;
        i = t;
      }
      if (in_low(t) && v < big_m) {
        big_m = v;
        j = t;
      }
    }
    violation = (i == n || j == n) ? 0.0 : m - big_m;
    if (violation < tolerance) {
      sol.converged = true;
      break;
    }
    if (iter >= max_iterations) break;

    // Cache capacity is >= 2 rows, so fetching row j never evicts row i.
    const auto ki = kernel.row(i);
    const auto kj = kernel.row(j);
    const double kij = ki[j];
    const double kii = kernel.diagonal(i), kjj = kernel.diagonal(j);
    const double ci = upper_bounds[i], cj = upper_bounds[j];
    const double old_ai = alpha[i], old_aj = alpha[j];
    double ai = old_ai, aj = old_aj;

    if (labels[i] != labels[j]) {
      double quad = kii + kjj - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > ci - cj) {
        if (ai > ci) {
          ai = ci;
          aj = ci - diff;
        }
      } else if (aj > cj) {
        aj = cj;
        ai = cj + diff;
      }
    } else {
      double quad = kii + kjj - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > ci) {
        if (ai > ci) {
          ai = ci;
          aj = sum - ci;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > cj) {
        if (aj > cj) {
          aj = cj;
          ai = sum - cj;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }
    alpha[i] = std::clamp(ai, 0.0, ci);
    alpha[j] = std::clamp(aj, 0.0, cj);

    const double dai = (alpha[i] - old_ai) * labels[i];
    const double daj = (alpha[j] - old_aj) * labels[j];
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += labels[t] * (ki[t] * dai + kj[t] * daj);
    }
  }
  sol.iterations = iter;
  sol.kkt_violation = violation;

  // rho: mean of y*G over free vectors, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = labels[t] * grad[t];
    const bool at_upper = alpha[t] >= upper_bounds[t];
    const bool at_lower = alpha[t] <= 0.0;
    if (at_upper) {
      if (labels[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (at_lower) {
      if (labels[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free;
      sum_free += yg;
    }
  }
  if (free > 0) {
    sol.rho = sum_free / static_cast<double>(free);
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    sol.rho = (ub + lb) / 2.0;
  } else {
    sol.rho = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);
  }

  double obj = 0.0;
  sol.decision_values.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    obj += alpha[t] * (grad[t] - 1.0);
    // sum_s alpha_s y_s K_ts = y_t (G_t + 1)
    sol.decision_values[t] = labels[t] * (grad[t] + 1.0) - sol.rho;
  }
  sol.objective = obj / 2.0;
  return sol;
}

double dual_objective(KernelSource& kernel, std::span<const int> labels,
                      std::span<const double> alpha) {
  const std::size_t n = kernel.size();
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lin += alpha[i];
    if (alpha[i] == 0.0) continue;
    const auto ki = kernel.row(i);
    for (std::size_t j = 0; j < n; ++j) quad += alpha[i] * alpha[j] * labels[i] * labels[j] * ki[j];
  }
  return 0.5 * quad - lin;
}

// --- model -----------------------------------------------------------------

void TrainingSet::add(std::span<const float> feature, bool label) {
  if (dim == 0 && labels.empty()) dim = feature.size();
  if (feature.size() != dim) {
    fail(ErrorCode::kInvalidArgument, "feature dim " + std::to_string(feature.size()) +
                                          " does not match training set dim " + std::to_string(dim));
  }
  check_finite(feature);
  samples.insert(samples.end(), feature.begin(), feature.end());
  labels.push_back(label ? 1 : 0);
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double GuidanceModel::decision_value(std::span<const float> feature) const {
  if (feature.size() != feature_dim) {
    fail(ErrorCode::kInvalidArgument, "feature dim " + std::to_string(feature.size()) +
                                          " does not match model dim " + std::to_string(feature_dim));
  }
  check_finite(feature);
  double f = bias;
  for (std::size_t s = 0; s < support_count(); ++s) {
    f += dual_coefficients[s] * rbf(support_vectors.data() + s * feature_dim, feature.data(),
                                    feature_dim, gamma);
  }
  return f;
}

double GuidanceModel::predict(std::span<const float> feature) const {
  return sigmoid(platt_a * decision_value(feature) + platt_b);
}

double auto_gamma(const TrainingSet& data) {
  const auto& v = data.samples;
  if (v.empty() || data.dim == 0) return 1.0;
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (float x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double d = static_cast<double>(data.dim);
  return var > 0.0 ? 1.0 / (d * var) : 1.0 / d;
}

std::pair<double, double> fit_platt(std::span<const double> dec, std::span<const int> labels) {
  const std::size_t n = dec.size();
  double prior1 = 0.0, prior0 = 0.0;
  for (int l : labels) (l > 0 ? prior1 : prior0) += 1.0;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = labels[i] > 0 ? hi : lo;

  // Parametrised as P(y=1|f) = 1 / (1 + exp(A f + B)).
  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10, kSigma = 1e-12, kEps = 1e-5;
  double A = 0.0, B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  const auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * a + b;
      f += z >= 0.0 ? target[i] * z + std::log1p(std::exp(-z))
                    : (target[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };
  double fval = objective(A, B);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = dec[i] * A + B;
      double p, q;
      if (z >= 0.0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += dec[i] * dec[i] * d2;
      h22 += d2;
      h21 += dec[i] * d2;
      const double d1 = target[i] - p;
      g1 += dec[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    while (step >= kMinStep) {
      const double nA = A + step * dA, nB = B + step * dB;
      const double nf = objective(nA, nB);
      if (nf < fval + 1e-4 * step * gd) {
        A = nA;
        B = nB;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {-A, -B};
}

GuidanceModel train(const TrainingSet& data, const std::string& part_class,
                    const TrainConfig& config, TrainReport* report) {
  const std::size_t n = data.size();
  if (n == 0) fail(ErrorCode::kInvalidArgument, "empty training set for '" + part_class + "'");
  if (data.samples.size() != n * data.dim) {
    fail(ErrorCode::kInvalidArgument, "training samples do not match dim x count");
  }
  if (!(config.C > 0.0) || !(config.tolerance > 0.0) || config.max_passes <= 0) {
    fail(ErrorCode::kInvalidArgument, "C, tolerance and max_passes must be positive");
  }
  if (config.gamma && !(*config.gamma > 0.0)) fail(ErrorCode::kInvalidArgument, "gamma must be > 0");
  check_finite(data.samples);

  const auto positives = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorCode::kInvalidArgument, "training set for '" + part_class +
                                          "' has a single class (" + std::to_string(positives) +
                                          " positive, " + std::to_string(negatives) + " negative)");
  }

  GuidanceModel model;
  model.part_class = part_class;
  model.feature_dim = data.dim;
  model.gamma = config.gamma.value_or(auto_gamma(data));
  model.seed = config.seed;
  model.C_negative = config.C;
  model.C_positive = config.balance_classes
                         ? config.C * static_cast<double>(negatives) / static_cast<double>(positives)
                         : config.C;

  std::vector<int> y(n);
  std::vector<double> bounds(n);
  for (std::size_t t = 0; t < n; ++t) {
    y[t] = data.labels[t] ? 1 : -1;
    bounds[t] = data.labels[t] ? model.C_positive : model.C_negative;
  }

  RbfKernelCache kernel(data.samples, data.dim, model.gamma, config.cache_bytes);
  const std::size_t max_iter = static_cast<std::size_t>(config.max_passes) * n;
  auto dual = solve_dual(kernel, y, bounds, config.tolerance, max_iter);

  for (std::size_t t = 0; t < n; ++t) {
    if (dual.alpha[t] <= 0.0) continue;
    model.support_vectors.insert(model.support_vectors.end(),
                                 data.samples.begin() + static_cast<std::ptrdiff_t>(t * data.dim),
                                 data.samples.begin() + static_cast<std::ptrdiff_t>((t + 1) * data.dim));
    model.dual_coefficients.push_back(dual.alpha[t] * y[t]);
  }
  model.bias = -dual.rho;

  const auto [a, b] = fit_platt(dual.decision_values, y);
  model.platt_a = a;
  model.platt_b = b;

  if (report != nullptr) {
    report->dual = std::move(dual);
    report->positives = positives;
    report->negatives = negatives;
  }
  return model;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::kInvalidArgument, "scores/labels size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their mean.
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0) {
        rank_sum += mid;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) fail(ErrorCode::kInvalidArgument, "AUC needs both labels");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

// --- serialization ---------------------------------------------------------

std::vector<char> serialize_model(const GuidanceModel& model) {
  nlohmann::ordered_json h;
  h["format"] = "partguide-model";
  h["version"] = 1;
  h["class"] = model.part_class;
  h["dim"] = model.feature_dim;
  h["gamma"] = model.gamma;
  h["C_positive"] = model.C_positive;
  h["C_negative"] = model.C_negative;
  h["bias"] = model.bias;
  h["platt"] = {model.platt_a, model.platt_b};
  h["seed"] = model.seed;
  h["support_count"] = model.support_count();
  h["dual_coefficients"] = model.dual_coefficients;
  const std::string header = h.dump() + "\n";

  FeatureBlob blob(model.feature_dim);
  for (std::size_t s = 0; s < model.support_count(); ++s) {
    blob.add({"sv", static_cast<int>(s)}, model.support_vector(s));
  }
  auto body = blob.serialize();
  std::vector<char> out(header.begin(), header.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

GuidanceModel deserialize_model(std::span<const char> bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
  if (nl == bytes.end()) fail(ErrorCode::kFormat, "model file has no header line");
  GuidanceModel m;
  try {
    const auto h = nlohmann::json::parse(bytes.begin(), nl);
    if (h.at("format") != "partguide-model") fail(ErrorCode::kFormat, "not a partguide model");
    m.part_class = h.at("class").get<std::string>();
    m.feature_dim = h.at("dim").get<std::size_t>();
    m.gamma = h.at("gamma").get<double>();
    m.C_positive = h.at("C_positive").get<double>();
    m.C_negative = h.at("C_negative").get<double>();
    m.bias = h.at("bias").get<double>();
    m.platt_a = h.at("platt").at(0).get<double>();
    m.platt_b = h.at("platt").at(1).get<double>();
    m.seed = h.value("seed", std::uint64_t{0});
    m.dual_coefficients = h.at("dual_coefficients").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("model header: ") + e.what());
  }
  const auto offset = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  const auto blob = FeatureBlob::deserialize(bytes.subspan(offset));
  if (blob.size() != m.dual_coefficients.size() || (blob.size() > 0 && blob.dim() != m.feature_dim)) {
    fail(ErrorCode::kFormat, "model support-vector block disagrees with header");
  }
  m.support_vectors.reserve(blob.size() * m.feature_dim);
  for (std::size_t s = 0; s < blob.size(); ++s) {
    const auto r = blob.row(s);
    m.support_vectors.insert(m.support_vectors.end(), r.begin(), r.end());
  }
  return m;
}

void write_model(const std::filesystem::path& path, const GuidanceModel& model) {
  const auto bytes = serialize_model(model);
  detail::write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

GuidanceModel read_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_binary_file(path);
  try {
    return deserialize_model(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace partguide
