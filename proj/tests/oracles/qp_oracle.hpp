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

// Brute-force solver for the SVM dual on tiny problems:
//
//   min 1/2 a'Qa - sum(a)   s.t.  0 <= a_i <= C_i,  y'a = 0,   Q_ij = y_i y_j K_ij
//
// Every face of the box is visited (each a_i at 0, at C_i, or free). On a
// face the free variables solve the equality-constrained stationarity system
// (minimum-norm solution when singular). The best feasible stationary point
// over all faces is the global minimum because the problem is convex.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

struct QpResult {
  std::vector<double> alpha;
  double objective = std::numeric_limits<double>::infinity();
  bool found = false;
};

inline double qp_objective(const Eigen::MatrixXd& Q, const Eigen::VectorXd& a) {
  return 0.5 * a.dot(Q * a) - a.sum();
}

inline QpResult solve_svm_dual(const std::vector<std::vector<double>>& K, const std::vector<int>& y,
                               const std::vector<double>& C) {
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd Q(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) Q(i, j) = y[i] * y[j] * K[i][j];
  }
  constexpr double kFeas = 1e-9;
  QpResult best;
  int faces = 1;
  for (int i = 0; i < n; ++i) faces *= 3;
  std::vector<int> state(n);
  for (int f = 0; f < faces; ++f) {
    int code = f;
    std::vector<int> free_idx;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      state[i] = code % 3;
      code /= 3;
      if (state[i] == 1) a(i) = C[i];
      if (state[i] == 2) free_idx.push_back(i);
    }
    const int m = static_cast<int>(free_idx.size());
    double fixed_balance = 0.0;
    for (int i = 0; i < n; ++i) {
      if (state[i] != 2) fixed_balance += y[i] * a(i);
    }
    if (m == 0) {
      if (std::abs(fixed_balance) > kFeas) continue;
    } else {
      // [Q_FF  y_F] [a_F]   [1 - Q_FB a_B]
      // [y_F'  0  ] [lam] = [ -y_B' a_B  ]
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
      Eigen::VectorXd b(m + 1);
      for (int r = 0; r < m; ++r) {
        const int i = free_idx[r];
        double rhs = 1.0;
        for (int j = 0; j < n; ++j) {
          if (state[j] != 2) rhs -= Q(i, j) * a(j);
        }
        for (int c = 0; c < m; ++c) A(r, c) = Q(i, free_idx[c]);
        A(r, m) = y[i];
        A(m, r) = y[i];
        b(r) = rhs;
      }
      b(m) = -fixed_balance;
      const Eigen::VectorXd sol = A.completeOrthogonalDecomposition().solve(b);
      if ((A * sol - b).norm() > 1e-7) continue;  // inconsistent face
      for (int r = 0; r < m; ++r) a(free_idx[r]) = sol(r);
    }
    bool feasible = true;
    for (int i = 0; i < n && feasible; ++i) feasible = a(i) >= -kFeas && a(i) <= C[i] + kFeas;
    if (!feasible) continue;
    double balance = 0.0;
    for (int i = 0; i < n; ++i) balance += y[i] * a(i);
    if (std::abs(balance) > 1e-7) continue;
    const double obj = qp_objective(Q, a);
    if (obj < best.objective) {
      best.objective = obj;
      best.alpha.assign(a.data(), a.data() + n);
      best.found = true;
    }
  }
  return best;
}

/// Maximal KKT violation m(a) - M(a) of a dual point, using the gradient
/// G = Qa - 1 and the index sets of the standard working-set rule.
inline double kkt_gap(const std::vector<std::vector<double>>& K, const std::vector<int>& y,
                      const std::vector<double>& C, const std::vector<double>& a) {
  const int n = static_cast<int>(y.size());
  double up = -std::numeric_limits<double>::infinity();
  double low = std::numeric_limits<double>::infinity();
  constexpr double kEdge = 1e-12;
  for (int t = 0; t < n; ++t) {
    double g = -1.0;
    for (int j = 0; j < n; ++j) g += y[t] * y[j] * K[t][j] * a[j];
    const double v = -y[t] * g;
    const bool below_upper = a[t] < C[t] - kEdge;
    const bool above_zero = a[t] > kEdge;
    const bool in_up = (y[t] == 1 && below_upper) || (y[t] == -1 && above_zero);
    const bool in_low = (y[t] == 1 && above_zero) || (y[t] == -1 && below_upper);
    if (in_up) up = std::max(up, v);
    if (in_low) low = std::min(low, v);
  }
  if (up == -std::numeric_limits<double>::infinity() || low == std::numeric_limits<double>::infinity()) return 0.0;
  return std::max(0.0, up - low);
}

}  // namespace oracle
