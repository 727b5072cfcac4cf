#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "lvlingam/distribution.hpp"
#include "lvlingam/error.hpp"
#include "lvlingam/rng.hpp"

namespace lvlingam {

using VariableId = int;

/// Absolute threshold separating structural zeros from rounding in exact
/// pipelines.
inline constexpr double faithful_tol = 1e-9;

struct Variable {
  VariableId id = 0;
  bool observed = true;
  double constant = 0.0;

  friend bool operator==(const Variable&, const Variable&) = default;
};

struct Edge {
  VariableId from = 0;
  VariableId to = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Matrix with variable labels on both axes. Rows are effects, columns are
/// causes (or sources).
struct LabeledMatrix {
  std::vector<VariableId> rows;
  std::vector<VariableId> cols;
  Eigen::MatrixXd values;

  std::ptrdiff_t row_index(VariableId id) const { return index_in(rows, id); }
  std::ptrdiff_t col_index(VariableId id) const { return index_in(cols, id); }
  double at(VariableId row, VariableId col) const {
    return values(row_index(row), col_index(col));
  }

 private:
  static std::ptrdiff_t index_in(const std::vector<VariableId>& v, VariableId id) {
    auto it = std::find(v.begin(), v.end(), id);
    if (it == v.end()) fail(ErrorCode::invalid_input, "unknown variable id " + std::to_string(id));
    return it - v.begin();
  }
};

/// Linear non-gaussian acyclic model over observed and hidden variables:
/// x_i = sum_j b_ij x_j + e_i + c_i.
struct LvModel {
  std::vector<Variable> variables;
  std::vector<Edge> edges;
  std::map<VariableId, Disturbance> disturbances;

  std::vector<VariableId> ids() const {
    std::vector<VariableId> out;
    for (const auto& v : variables) out.push_back(v.id);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<VariableId> observed_ids() const { return select(true); }
  std::vector<VariableId> hidden_ids() const { return select(false); }

  const Variable* find(VariableId id) const {
    for (const auto& v : variables)
      if (v.id == id) return &v;
    return nullptr;
  }

  bool is_observed(VariableId id) const {
    const auto* v = find(id);
    return v && v->observed;
  }

  double weight(VariableId from, VariableId to) const {
    for (const auto& e : edges)
      if (e.from == from && e.to == to) return e.weight;
    return 0.0;
  }

  std::vector<VariableId> children(VariableId id) const {
    std::vector<VariableId> out;
    for (const auto& e : edges)
      if (e.from == id) out.push_back(e.to);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<VariableId> parents(VariableId id) const {
    std::vector<VariableId> out;
    for (const auto& e : edges)
      if (e.to == id) out.push_back(e.from);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Sorts variables by id and edges by (from, to).
  void normalize() {
    std::sort(variables.begin(), variables.end(),
              [](const Variable& a, const Variable& b) { return a.id < b.id; });
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      return std::pair(a.from, a.to) < std::pair(b.from, b.to);
    });
  }

  friend bool operator==(const LvModel&, const LvModel&) = default;

 private:
  std::vector<VariableId> select(bool observed) const {
    std::vector<VariableId> out;
    for (const auto& v : variables)
      if (v.observed == observed) out.push_back(v.id);
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Samples of the observed variables, one row per sample.
struct DataMatrix {
  std::vector<VariableId> columns;
  Eigen::MatrixXd values;

  Eigen::Index n() const { return values.rows(); }
};

struct Violation {
  std::string kind;
  std::string detail;
  std::vector<VariableId> variables;
};

namespace detail {

inline std::map<VariableId, std::size_t> index_map(const std::vector<VariableId>& ids) {
  std::map<VariableId, std::size_t> m;
  for (std::size_t i = 0; i < ids.size(); ++i) m[ids[i]] = i;
  return m;
}

// Kahn's algorithm with a min-heap so ties resolve by ascending id. Returns
// fewer ids than variables when the graph has a cycle.
inline std::vector<VariableId> topological_order(const LvModel& model) {
  const auto ids = model.ids();
  const auto index = index_map(ids);
  std::vector<int> indegree(ids.size(), 0);
  std::vector<std::vector<VariableId>> out(ids.size());
  for (const auto& e : model.edges) {
    auto f = index.find(e.from), t = index.find(e.to);
    if (f == index.end() || t == index.end()) continue;
    out[f->second].push_back(e.to);
    ++indegree[t->second];
  }
  std::priority_queue<VariableId, std::vector<VariableId>, std::greater<>> ready;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (indegree[i] == 0) ready.push(ids[i]);
  std::vector<VariableId> order;
  while (!ready.empty()) {
    const VariableId v = ready.top();
    ready.pop();
    order.push_back(v);
    for (VariableId c : out[index.at(v)])
      if (--indegree[index.at(c)] == 0) ready.push(c);
  }
  return order;
}

// reach(i, j) is true when a directed path j -> ... -> i of length >= 1 exists.
inline Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> reachability(
    const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& adjacency) {
  const Eigen::Index n = adjacency.rows();
  auto reach = adjacency;
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      if (reach(i, k))
        for (Eigen::Index j = 0; j < n; ++j)
          if (reach(k, j)) reach(i, j) = true;
  return reach;
}

}  // namespace detail

/// Direct-effect matrix B in ascending id order; entry (i, j) is the weight of
/// the edge j -> i.
inline LabeledMatrix direct_effects(const LvModel& model) {
  LabeledMatrix b;
  b.rows = b.cols = model.ids();
  const auto index = detail::index_map(b.rows);
  b.values = Eigen::MatrixXd::Zero(b.rows.size(), b.cols.size());
  for (const auto& e : model.edges) b.values(index.at(e.to), index.at(e.from)) += e.weight;
  return b;
}

/// Topological order, ties broken by ascending id.
inline std::vector<VariableId> causal_order(const LvModel& model) {
  auto order = detail::topological_order(model);
  if (order.size() != model.variables.size())
    fail(ErrorCode::cycle_detected, "model graph contains a directed cycle");
  return order;
}

/// (I - B)^-1 in ascending id order. Entry (i, j) is the total effect of x_j on
/// x_i. Entries with no connecting path are exactly zero.
inline LabeledMatrix total_effects(const LvModel& model) {
  const auto order = causal_order(model);
  const auto b = direct_effects(model);
  const auto n = static_cast<Eigen::Index>(order.size());
  // Permute into causal order so I - B is unit lower triangular.
  std::vector<Eigen::Index> pos(n);
  for (Eigen::Index k = 0; k < n; ++k) pos[k] = b.row_index(order[k]);
  Eigen::MatrixXd lower(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      lower(i, j) = (i == j ? 1.0 : 0.0) - b.values(pos[i], pos[j]);
  if (lower.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() != 0.0)
    fail(ErrorCode::internal, "causal order does not triangularize the direct effects");
  const Eigen::MatrixXd inv =
      lower.triangularView<Eigen::UnitLower>().solve(Eigen::MatrixXd::Identity(n, n));
  LabeledMatrix t;
  t.rows = t.cols = b.rows;
  t.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) t.values(pos[i], pos[j]) = inv(i, j);
  return t;
}

/// Observed rows of the mixing matrix with every source column scaled to unit
/// variance. Rows: observed ids ascending; columns: all ids ascending.
inline LabeledMatrix source_mixing(const LvModel& model) {
  const auto t = total_effects(model);
  LabeledMatrix a;
  a.rows = model.observed_ids();
  a.cols = t.cols;
  a.values.resize(a.rows.size(), a.cols.size());
  for (std::size_t j = 0; j < a.cols.size(); ++j) {
    const double sd = std::sqrt(model.disturbances.at(a.cols[j]).variance());
    for (std::size_t i = 0; i < a.rows.size(); ++i)
      a.values(i, j) = t.at(a.rows[i], a.cols[j]) * sd;
  }
  return a;
}

/// Expected value of every observed variable, ascending id order.
inline Eigen::VectorXd observed_means(const LvModel& model) {
  const auto t = total_effects(model);
  Eigen::VectorXd c(t.cols.size());
  for (std::size_t j = 0; j < t.cols.size(); ++j) c(j) = model.find(t.cols[j])->constant;
  const Eigen::VectorXd mu = t.values * c;
  const auto obs = model.observed_ids();
  Eigen::VectorXd out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) out(i) = mu(t.row_index(obs[i]));
  return out;
}

inline std::vector<Violation> validate(const LvModel& model) {
  std::vector<Violation> out;
  std::set<VariableId> seen;
  for (const auto& v : model.variables)
    if (!seen.insert(v.id).second)
      out.push_back({"duplicate-id", "variable id appears more than once", {v.id}});

  std::set<std::pair<VariableId, VariableId>> pairs;
  bool edges_ok = true;
  for (const auto& e : model.edges) {
    if (!seen.count(e.from) || !seen.count(e.to)) {
      out.push_back({"unknown-endpoint", "edge references an undeclared variable", {e.from, e.to}});
      edges_ok = false;
      continue;
    }
    if (e.from == e.to) {
      out.push_back({"self-edge", "edge from a variable to itself", {e.from}});
      edges_ok = false;
    }
    if (!pairs.insert({e.from, e.to}).second) {
      out.push_back({"duplicate-edge", "more than one edge for an ordered pair", {e.from, e.to}});
      edges_ok = false;
    }
    if (e.weight == 0.0 || !std::isfinite(e.weight))
      out.push_back({"zero-weight", "edge weight must be finite and nonzero", {e.from, e.to}});
  }

  bool acyclic = false;
  if (edges_ok) {
    const auto order = detail::topological_order(model);
    acyclic = order.size() == model.variables.size();
    if (!acyclic) {
      std::vector<VariableId> stuck;
      const std::set<VariableId> ordered(order.begin(), order.end());
      for (auto id : model.ids())
        if (!ordered.count(id)) stuck.push_back(id);
      out.push_back({"cycle", "edges do not form a directed acyclic graph", stuck});
    }
  }

  for (const auto& v : model.variables) {
    auto it = model.disturbances.find(v.id);
    if (it == model.disturbances.end()) {
      out.push_back({"missing-disturbance", "variable has no disturbance entry", {v.id}});
      continue;
    }
    for (const auto& p : it->second.problems())
      out.push_back({"invalid-disturbance", p, {v.id}});
    if (it->second.is_gaussian())
      out.push_back({"gaussian-disturbance", "disturbance must be non-gaussian", {v.id}});
  }
  for (const auto& [id, d] : model.disturbances)
    if (!seen.count(id))
      out.push_back({"unknown-endpoint", "disturbance for an undeclared variable", {id}});

  if (acyclic && out.empty()) {
    const auto b = direct_effects(model);
    const auto reach = detail::reachability(b.values.array() != 0.0);
    const auto t = total_effects(model);
    for (Eigen::Index i = 0; i < reach.rows(); ++i)
      for (Eigen::Index j = 0; j < reach.cols(); ++j)
        if (i != j && reach(i, j) && std::abs(t.values(i, j)) <= faithful_tol)
          out.push_back({"unfaithful", "path effects cancel to zero", {b.cols[j], b.rows[i]}});
  }
  return out;
}

/// Draws n samples of the observed variables. Each variable's disturbance has
/// its own seed stream, so results are reproducible bit for bit.
inline DataMatrix simulate(const LvModel& model, Eigen::Index n, Seed seed) {
  if (n < 1) fail(ErrorCode::invalid_input, "sample count must be at least 1");
  const auto order = causal_order(model);
  const auto ids = model.ids();
  const auto index = detail::index_map(ids);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(ids.size()));
  for (VariableId v : order) {
    auto eng = seed.split(static_cast<std::uint64_t>(v)).engine();
    const auto& dist = model.disturbances.at(v);
    const double c = model.find(v)->constant;
    auto col = x.col(index.at(v));
    for (Eigen::Index s = 0; s < n; ++s) col(s) = dist.sample(eng) + c;
    for (const auto& e : model.edges)
      if (e.to == v) col += e.weight * x.col(index.at(e.from));
  }
  DataMatrix out;
  out.columns = model.observed_ids();
  out.values.resize(n, static_cast<Eigen::Index>(out.columns.size()));
  for (std::size_t j = 0; j < out.columns.size(); ++j)
    out.values.col(j) = x.col(index.at(out.columns[j]));
  return out;
}

}  // namespace lvlingam
