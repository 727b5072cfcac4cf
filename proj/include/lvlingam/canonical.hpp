#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lvlingam/distribution.hpp"
#include "lvlingam/model.hpp"

namespace lvlingam {

/// Relative tolerance on the cross-ratio test for proportional hidden columns.
inline constexpr double prop_tol = 1e-9;

/// A model that satisfied the canonical predicate when it was built.
struct CanonicalModel {
  LvModel model;
  bool certified = false;
};

struct CanonicalCheck {
  bool canonical = true;
  std::vector<Violation> violations;
};

namespace detail {

// True when b = r * a for some r != 0, both vectors sharing one support.
inline bool proportional(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tol) {
  if (a.size() != b.size() || a.size() == 0) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if ((a(i) == 0.0) != (b(i) == 0.0)) return false;
  Eigen::Index k = 0;
  if (a.cwiseAbs().maxCoeff(&k) == 0.0) return false;
  const double r = b(k) / a(k);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double lhs = b(i), rhs = r * a(i);
    if (std::abs(lhs - rhs) > tol * std::max(std::abs(lhs), std::abs(rhs))) return false;
  }
  return true;
}

// Kuhn's augmenting-path matching. ok(i, j) says left i may pair with right j.
inline bool perfect_matching(std::size_t n, const std::function<bool(std::size_t, std::size_t)>& ok) {
  std::vector<std::vector<bool>> allowed(n, std::vector<bool>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) allowed[i][j] = ok(i, j);
  std::vector<int> owner(n, -1);
  std::function<bool(std::size_t, std::vector<bool>&)> augment = [&](std::size_t i,
                                                                     std::vector<bool>& seen) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!allowed[i][j] || seen[j]) continue;
      seen[j] = true;
      if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]), seen)) {
        owner[j] = static_cast<int>(i);
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<bool> seen(n, false);
    if (!augment(i, seen)) return false;
  }
  return true;
}

// Mutable graph used while reducing a model.
struct WorkGraph {
  struct Node {
    bool observed = true;
    double constant = 0.0;
    Disturbance dist;
  };
  std::map<VariableId, Node> nodes;
  std::map<std::pair<VariableId, VariableId>, double> edges;

  explicit WorkGraph(const LvModel& m) {
    for (const auto& v : m.variables) nodes[v.id] = {v.observed, v.constant, m.disturbances.at(v.id)};
    for (const auto& e : m.edges) edges[{e.from, e.to}] += e.weight;
  }

  bool hidden(VariableId id) const { return !nodes.at(id).observed; }

  std::vector<std::pair<VariableId, double>> children(VariableId id) const {
    std::vector<std::pair<VariableId, double>> out;
    for (const auto& [k, w] : edges)
      if (k.first == id) out.emplace_back(k.second, w);
    return out;
  }

  bool has_parents(VariableId id) const {
    for (const auto& [k, w] : edges)
      if (k.second == id) return true;
    return false;
  }

  void remove_node(VariableId id) {
    nodes.erase(id);
    std::erase_if(edges, [id](const auto& kv) { return kv.first.first == id || kv.first.second == id; });
  }

  // Adds w to from -> to, dropping the edge if the sum cancels.
  void add_edge(VariableId from, VariableId to, double w) {
    auto [it, inserted] = edges.try_emplace({from, to}, 0.0);
    const double before = it->second;
    it->second += w;
    if (std::abs(it->second) <= faithful_tol * std::max(std::abs(before), std::abs(w)))
      edges.erase(it);
  }

  std::vector<VariableId> hidden_ids() const {
    std::vector<VariableId> out;
    for (const auto& [id, n] : nodes)
      if (!n.observed) out.push_back(id);
    return out;
  }

  std::vector<VariableId> observed_ids() const {
    std::vector<VariableId> out;
    for (const auto& [id, n] : nodes)
      if (n.observed) out.push_back(id);
    return out;
  }

  Eigen::VectorXd child_weights(VariableId h, const std::vector<VariableId>& targets) const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto it = edges.find({h, targets[i]});
      if (it != edges.end()) w(static_cast<Eigen::Index>(i)) = it->second;
    }
    return w;
  }

  LvModel to_model() const {
    LvModel m;
    for (const auto& [id, n] : nodes) {
      m.variables.push_back({id, n.observed, n.constant});
      m.disturbances.emplace(id, n.dist);
    }
    for (const auto& [k, w] : edges) m.edges.push_back({k.first, k.second, w});
    return m;
  }
};

// Step 1: drop childless latents until none remain.
inline void remove_childless_latents(WorkGraph& g) {
  for (bool changed = true; changed;) {
    changed = false;
    for (VariableId h : g.hidden_ids())
      if (g.children(h).empty()) {
        g.remove_node(h);
        changed = true;
      }
  }
}

// Step 2: route every edge into a latent directly to the latent's children.
inline void bypass_latent_parents(WorkGraph& g) {
  for (;;) {
    auto it = std::find_if(g.edges.begin(), g.edges.end(),
                           [&](const auto& kv) { return g.hidden(kv.first.second); });
    if (it == g.edges.end()) return;
    const auto [from, latent] = it->first;
    const double w = it->second;
    g.edges.erase(it);
    for (const auto& [child, v] : g.children(latent)) g.add_edge(from, child, w * v);
  }
}

// Step 3: fold latents with a single child into that child.
inline void absorb_single_child_latents(WorkGraph& g) {
  for (bool changed = true; changed;) {
    changed = false;
    for (VariableId h : g.hidden_ids()) {
      const auto kids = g.children(h);
      if (kids.size() != 1) continue;
      const auto [child, w] = kids.front();
      auto& c = g.nodes.at(child);
      const auto& latent = g.nodes.at(h);
      c.constant += w * latent.constant;
      c.dist = Disturbance::combine(1.0, c.dist, w, latent.dist);
      g.remove_node(h);
      changed = true;
    }
  }
}

// Step 4: merge latents whose child-weight vectors are proportional.
inline void merge_proportional_latents(WorkGraph& g) {
  for (bool changed = true; changed;) {
    changed = false;
    const auto hidden = g.hidden_ids();
    const auto targets = g.observed_ids();
    for (std::size_t a = 0; a < hidden.size() && !changed; ++a) {
      const auto wa = g.child_weights(hidden[a], targets);
      for (std::size_t b = a + 1; b < hidden.size() && !changed; ++b) {
        const auto wb = g.child_weights(hidden[b], targets);
        if (!proportional(wa, wb, prop_tol)) continue;
        Eigen::Index k = 0;
        wa.cwiseAbs().maxCoeff(&k);
        const double r = wb(k) / wa(k);
        auto& keep = g.nodes.at(hidden[a]);
        const auto& gone = g.nodes.at(hidden[b]);
        keep.constant += r * gone.constant;
        keep.dist = Disturbance::combine(1.0, keep.dist, r, gone.dist);
        g.remove_node(hidden[b]);
        changed = true;
      }
    }
  }
}

// Step 5: zero mean and unit variance latents; lowest-id child weight positive.
inline void standardize_latents(WorkGraph& g) {
  for (VariableId h : g.hidden_ids()) {
    auto& node = g.nodes.at(h);
    const auto kids = g.children(h);
    const double sd = std::sqrt(node.dist.variance());
    const bool rescale = std::abs(sd - 1.0) > 1e-12;
    double sign = 1.0;
    if (!kids.empty() && kids.front().second * (rescale ? sd : 1.0) < 0) sign = -1.0;
    for (const auto& [child, w] : kids) {
      g.nodes.at(child).constant += w * node.constant;
      g.edges.at({h, child}) = sign * (rescale ? w * sd : w);
    }
    node.constant = 0.0;
    const double factor = sign * (rescale ? 1.0 / sd : 1.0);
    if (factor != 1.0) node.dist = node.dist.scaled(factor);
  }
}

}  // namespace detail

/// Hidden-to-observed weight vectors, one column per hidden id (ascending),
/// rows over observed ids (ascending).
inline Eigen::MatrixXd hidden_columns(const LvModel& model) {
  const auto obs = model.observed_ids();
  const auto hid = model.hidden_ids();
  Eigen::MatrixXd w(obs.size(), hid.size());
  for (std::size_t j = 0; j < hid.size(); ++j)
    for (std::size_t i = 0; i < obs.size(); ++i) w(i, j) = model.weight(hid[j], obs[i]);
  return w;
}

inline CanonicalCheck is_canonical(const LvModel& model) {
  CanonicalCheck out;
  auto add = [&](std::string kind, std::string detail, std::vector<VariableId> ids) {
    out.canonical = false;
    out.violations.push_back({std::move(kind), std::move(detail), std::move(ids)});
  };
  const auto hidden = model.hidden_ids();
  for (VariableId h : hidden) {
    if (!model.parents(h).empty()) add("latent-not-root", "latent variable has parents", {h});
    if (model.children(h).size() < 2)
      add("latent-few-children", "latent variable has fewer than two children", {h});
    const auto& d = model.disturbances.at(h);
    if (model.find(h)->constant != 0.0 || std::abs(d.variance() - 1.0) > 1e-9)
      add("latent-not-standardized", "latent variable must have zero mean and unit variance", {h});
  }
  const auto obs = model.observed_ids();
  for (std::size_t a = 0; a < hidden.size(); ++a)
    for (std::size_t b = a + 1; b < hidden.size(); ++b) {
      Eigen::VectorXd wa(obs.size()), wb(obs.size());
      for (std::size_t i = 0; i < obs.size(); ++i) {
        wa(i) = model.weight(hidden[a], obs[i]);
        wb(i) = model.weight(hidden[b], obs[i]);
      }
      if (detail::proportional(wa, wb, prop_tol))
        add("latent-proportional", "latent variables have proportional child weights",
            {hidden[a], hidden[b]});
    }
  return out;
}

/// Wraps a model that already satisfies the canonical predicate.
inline CanonicalModel certify(LvModel model) {
  const auto check = is_canonical(model);
  if (!check.canonical)
    fail(ErrorCode::invalid_input, "model is not canonical: " + check.violations.front().detail);
  model.normalize();
  return {std::move(model), true};
}

/// Reduces a model to an observationally and causally equivalent canonical
/// model. Each step runs to a fixpoint before the next one starts.
inline CanonicalModel canonicalize(const LvModel& model) {
  detail::WorkGraph g(model);
  detail::remove_childless_latents(g);
  detail::bypass_latent_parents(g);
  detail::absorb_single_child_latents(g);
  detail::merge_proportional_latents(g);
  detail::standardize_latents(g);
  auto out = g.to_model();
  out.normalize();
  const bool ok = is_canonical(out).canonical;
  return {std::move(out), ok};
}

/// Sufficient test for equal observed distributions: the unit-variance
/// observed mixing columns match up to permutation and sign, and matched
/// sources agree in standardized skewness and kurtosis when both shapes are
/// known.
inline bool observationally_equivalent(const CanonicalModel& m1, const CanonicalModel& m2,
                                       double tol) {
  if (m1.model.observed_ids() != m2.model.observed_ids()) return false;
  struct Column {
    Eigen::VectorXd a;
    Disturbance dist;
  };
  auto columns = [tol](const LvModel& m) {
    const auto mix = source_mixing(m);
    std::vector<Column> out;
    for (std::size_t j = 0; j < mix.cols.size(); ++j) {
      const Eigen::VectorXd col = mix.values.col(static_cast<Eigen::Index>(j));
      if (col.size() > 0 && col.cwiseAbs().maxCoeff() <= tol) continue;
      out.push_back({col, m.disturbances.at(mix.cols[j])});
    }
    return out;
  };
  const auto c1 = columns(m1.model), c2 = columns(m2.model);
  if (c1.size() != c2.size()) return false;
  auto close = [tol](double x, double y) {
    if (std::isnan(x) || std::isnan(y)) return true;
    return std::abs(x - y) <= tol * (1.0 + std::max(std::abs(x), std::abs(y)));
  };
  auto same_shape = [&](const Disturbance& d1, const Disturbance& d2, double sign) {
    if (!d1.shape_known() || !d2.shape_known()) return true;
    const auto k1 = d1.cumulants(), k2 = d2.cumulants();
    return close(k1.skewness(), sign * k2.skewness()) &&
           close(k1.excess_kurtosis(), k2.excess_kurtosis());
  };
  return detail::perfect_matching(c1.size(), [&](std::size_t i, std::size_t j) {
    for (double sign : {1.0, -1.0}) {
      if ((c1[i].a - sign * c2[j].a).cwiseAbs().maxCoeff() > tol) continue;
      if (same_shape(c1[i].dist, c2[j].dist, sign)) return true;
    }
    return false;
  });
}

/// Structural test for equal causal effects among observed variables:
/// identical observed-to-observed direct effects and matching hidden columns
/// up to permutation and sign.
inline bool causally_equivalent(const CanonicalModel& m1, const CanonicalModel& m2, double tol) {
  const auto obs = m1.model.observed_ids();
  if (obs != m2.model.observed_ids()) return false;
  for (VariableId i : obs)
    for (VariableId j : obs)
      if (std::abs(m1.model.weight(j, i) - m2.model.weight(j, i)) > tol) return false;
  const auto h1 = hidden_columns(m1.model), h2 = hidden_columns(m2.model);
  if (h1.cols() != h2.cols()) return false;
  if (h1.cols() == 0) return true;
  return detail::perfect_matching(static_cast<std::size_t>(h1.cols()), [&](std::size_t i, std::size_t j) {
    const auto a = h1.col(static_cast<Eigen::Index>(i));
    const auto b = h2.col(static_cast<Eigen::Index>(j));
    return (a - b).cwiseAbs().maxCoeff() <= tol || (a + b).cwiseAbs().maxCoeff() <= tol;
  });
}

}  // namespace lvlingam
