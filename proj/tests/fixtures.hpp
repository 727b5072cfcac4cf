#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <map>
#include <vector>

#include "lvlingam/model.hpp"

namespace fixtures {

using namespace lvlingam;

// Eight-variable example with hidden x4, x6, x7 and observed x1, x2, x3, x5, x8.
//   x6 := 2 x2 + 4 x4 + e6    x1 := 2 x4 + 3 x5 + e1    x8 := 3 x6 + e8
//   x3 := -8 x4 - 5 x1 + e3   x7 := -7 x1 + e7
// Every disturbance has unit variance; all constants are zero.
inline LvModel eight_variable_model() {
  LvModel m;
  for (VariableId id = 1; id <= 8; ++id) {
    const bool hidden = id == 4 || id == 6 || id == 7;
    m.variables.push_back({id, !hidden, 0.0});
  }
  m.edges = {{2, 6, 2.0},  {4, 6, 4.0},  {4, 1, 2.0}, {5, 1, 3.0},
             {6, 8, 3.0},  {4, 3, -8.0}, {1, 3, -5.0}, {1, 7, -7.0}};
  const double r3 = std::sqrt(3.0);
  m.disturbances = {
      {1, Disturbance::laplace(std::sqrt(0.5))},
      {2, Disturbance::uniform(r3)},
      {3, bimodal_mixture(0.3, 0.7, 1.0)},
      {4, Disturbance::uniform(r3)},
      {5, Disturbance::laplace(std::sqrt(0.5))},
      {6, bimodal_mixture(0.5, 0.8, 1.0)},
      {7, Disturbance::uniform(r3)},
      {8, Disturbance::generalized_gaussian(4.0, std::sqrt(std::tgamma(0.25) / std::tgamma(0.75)))},
  };
  m.normalize();
  return m;
}

// The reduced form: x6 and x7 gone, x8 := 6 x2 + 12 x4 + (3 e6 + e8).
inline LvModel eight_variable_reduced() {
  LvModel m = eight_variable_model();
  auto full = m.disturbances;
  m.variables.erase(std::remove_if(m.variables.begin(), m.variables.end(),
                                   [](const Variable& v) { return v.id == 6 || v.id == 7; }),
                    m.variables.end());
  m.edges = {{4, 1, 2.0}, {5, 1, 3.0}, {4, 3, -8.0}, {1, 3, -5.0}, {2, 8, 6.0}, {4, 8, 12.0}};
  m.disturbances.erase(6);
  m.disturbances.erase(7);
  m.disturbances[8] = Disturbance::combine(1.0, full.at(8), 3.0, full.at(6));
  m.normalize();
  return m;
}

// Independent oracle: sum over every directed path of the product of weights.
inline double path_sum(const LvModel& m, VariableId from, VariableId to) {
  if (from == to) return 1.0;
  double total = 0;
  for (const auto& e : m.edges)
    if (e.from == from) total += e.weight * path_sum(m, e.to, to);
  return total;
}

inline Eigen::MatrixXd observed_total_effects(const LvModel& m) {
  const auto t = total_effects(m);
  const auto obs = m.observed_ids();
  Eigen::MatrixXd out(obs.size(), obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = 0; j < obs.size(); ++j) out(i, j) = t.at(obs[i], obs[j]);
  return out;
}

inline Eigen::MatrixXd observed_covariance(const LvModel& m) {
  const auto a = source_mixing(m);
  return a.values * a.values.transpose();
}

inline LvModel chain(std::vector<VariableId> order, double w) {
  LvModel m;
  for (auto id : order) {
    m.variables.push_back({id, true, 0.0});
    m.disturbances.emplace(id, Disturbance::laplace(1.0));
  }
  for (std::size_t i = 0; i + 1 < order.size(); ++i) m.edges.push_back({order[i], order[i + 1], w});
  m.normalize();
  return m;
}

}  // namespace fixtures

namespace fixtures {

// Exhaustive search over every row and column permutation.
inline bool brute_force_triangular(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& p) {
  const int n = static_cast<int>(p.rows());
  std::vector<int> rows(n), cols(n);
  std::iota(rows.begin(), rows.end(), 0);
  do {
    std::iota(cols.begin(), cols.end(), 0);
    do {
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        if (!p(rows[i], cols[i])) ok = false;
        for (int j = i + 1; j < n && ok; ++j)
          if (p(rows[i], cols[j])) ok = false;
      }
      if (ok) return true;
    } while (std::next_permutation(cols.begin(), cols.end()));
  } while (std::next_permutation(rows.begin(), rows.end()));
  return false;
}

// Exhaustive over column orders; the row order is then forced, since each
// row must sit at the position of its last nonzero column.
inline bool column_order_search(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& p) {
  const int n = static_cast<int>(p.rows());
  std::vector<int> cols(n);
  std::iota(cols.begin(), cols.end(), 0);
  do {
    std::vector<bool> taken(n, false);
    bool ok = true;
    for (int r = 0; r < n && ok; ++r) {
      int last = -1;
      for (int k = 0; k < n; ++k)
        if (p(r, cols[k])) last = k;
      if (last < 0 || taken[last]) ok = false;
      else taken[last] = true;
    }
    if (ok) return true;
  } while (std::next_permutation(cols.begin(), cols.end()));
  return false;
}

// Columns equal up to permutation and sign.
inline bool same_columns_up_to_sign(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  std::vector<bool> used(b.cols(), false);
  std::function<bool(Eigen::Index)> go = [&](Eigen::Index i) {
    if (i == a.cols()) return true;
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      if (used[j]) continue;
      if ((a.col(i) - b.col(j)).cwiseAbs().maxCoeff() > tol &&
          (a.col(i) + b.col(j)).cwiseAbs().maxCoeff() > tol)
        continue;
      used[j] = true;
      if (go(i + 1)) return true;
      used[j] = false;
    }
    return false;
  };
  return go(0);
}

// Basis rows reordered to match the given row ids.
inline Eigen::MatrixXd rows_in_order(const std::vector<VariableId>& ids,
                                     const std::vector<VariableId>& want,
                                     const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t i = 0; i < want.size(); ++i)
    out.row(i) = m.row(std::find(ids.begin(), ids.end(), want[i]) - ids.begin());
  return out;
}

}  // namespace fixtures
