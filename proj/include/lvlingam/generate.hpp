#pragma once

#include <cstdint>
#include <vector>

#include "lvlingam/canonical.hpp"
#include "lvlingam/distribution.hpp"
#include "lvlingam/model.hpp"
#include "lvlingam/rng.hpp"

namespace lvlingam {

struct GenerationConfig {
  int n_observed = 3;
  int n_hidden = 0;
  double edge_prob = 0.5;
  double w_min = 0.5;
  double w_max = 1.5;
  double var_min = 0.5;
  double var_max = 1.5;
  double constant_range = 1.0;
  // Additional latents with at most one child; canonicalization removes them.
  int n_irrelevant_hidden = 0;
  // Lower bound on |edge weight| and |total effect| along every path, checked
  // on both the generated and the canonical model.
  double min_total_effect = faithful_tol;
  int max_retries = 1000;
  std::vector<Family> families = {Family::laplace, Family::uniform,
                                  Family::generalized_gaussian, Family::gaussian_mixture};
};

namespace detail {

inline Disturbance random_disturbance(Family family, double variance, Engine& eng) {
  switch (family) {
    case Family::laplace:
      return Disturbance::laplace(std::sqrt(variance / 2));
    case Family::uniform:
      return Disturbance::uniform(std::sqrt(3 * variance));
    case Family::generalized_gaussian: {
      // keep the shape away from the gaussian value 2
      const double shape = coin(eng, 0.5) ? uniform(eng, 0.6, 1.4) : uniform(eng, 3.0, 8.0);
      const double unit = std::tgamma(3 / shape) / std::tgamma(1 / shape);
      return Disturbance::generalized_gaussian(shape, std::sqrt(variance / unit));
    }
    case Family::gaussian_mixture:
      return bimodal_mixture(uniform(eng, 0.2, 0.8), uniform(eng, 0.5, 0.9), variance);
    default:
      fail(ErrorCode::invalid_input, "cannot generate disturbances of this family");
  }
}

inline double random_weight(const GenerationConfig& cfg, Engine& eng) {
  const double w = uniform(eng, cfg.w_min, cfg.w_max);
  return coin(eng, 0.5) ? w : -w;
}

inline bool strong_enough(const LvModel& m, double min_effect) {
  for (const auto& e : m.edges)
    if (std::abs(e.weight) < min_effect) return false;
  const auto t = total_effects(m);
  const auto reach = reachability(direct_effects(m).values.array() != 0.0);
  for (Eigen::Index i = 0; i < reach.rows(); ++i)
    for (Eigen::Index j = 0; j < reach.cols(); ++j)
      if (i != j && reach(i, j) && std::abs(t.values(i, j)) < min_effect) return false;
  return true;
}

}  // namespace detail

/// Random latent-variable model whose canonical form keeps exactly
/// n_hidden latents. Retries until every constraint holds.
inline LvModel random_model(const GenerationConfig& cfg, Seed seed) {
  if (cfg.n_observed < 2 || cfg.n_hidden < 0 || cfg.n_irrelevant_hidden < 0)
    fail(ErrorCode::invalid_input, "need at least two observed and non-negative hidden counts");
  if (!(cfg.w_min > 0 && cfg.w_max >= cfg.w_min))
    fail(ErrorCode::invalid_input, "weight range must satisfy 0 < w_min <= w_max");
  if (!(cfg.edge_prob >= 0 && cfg.edge_prob <= 1))
    fail(ErrorCode::invalid_input, "edge probability must lie in [0, 1]");
  if (cfg.families.empty()) fail(ErrorCode::invalid_input, "no disturbance families allowed");

  const int m = cfg.n_observed + cfg.n_hidden + cfg.n_irrelevant_hidden;
  enum class Role { observed, hidden, irrelevant };

  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    auto eng = seed.split(static_cast<std::uint64_t>(attempt)).engine();

    std::vector<Role> role(m, Role::observed);
    for (int i = 0; i < cfg.n_hidden; ++i) role[cfg.n_observed + i] = Role::hidden;
    for (int i = 0; i < cfg.n_irrelevant_hidden; ++i)
      role[cfg.n_observed + cfg.n_hidden + i] = Role::irrelevant;
    shuffle(role, eng);
    std::vector<VariableId> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    shuffle(order, eng);

    LvModel model;
    for (VariableId id = 0; id < m; ++id) {
      const double c =
          cfg.constant_range > 0 ? uniform(eng, -cfg.constant_range, cfg.constant_range) : 0.0;
      model.variables.push_back({id, role[id] == Role::observed, c});
      const auto fam = cfg.families[std::uniform_int_distribution<std::size_t>(
          0, cfg.families.size() - 1)(eng)];
      model.disturbances.emplace(
          id, detail::random_disturbance(fam, uniform(eng, cfg.var_min, cfg.var_max), eng));
    }

    bool feasible = true;
    for (int a = 0; a < m; ++a) {
      const VariableId from = order[a];
      std::vector<VariableId> later(order.begin() + a + 1, order.end());
      if (role[from] == Role::irrelevant) {
        // zero or one child
        if (!later.empty() && coin(eng, 0.5)) {
          const auto k = std::uniform_int_distribution<std::size_t>(0, later.size() - 1)(eng);
          model.edges.push_back({from, later[k], detail::random_weight(cfg, eng)});
        }
        continue;
      }
      std::vector<VariableId> kids;
      for (VariableId to : later)
        if (coin(eng, cfg.edge_prob)) kids.push_back(to);
      if (role[from] == Role::hidden) {
        // a relevant latent needs at least two observed children
        std::vector<VariableId> obs_later;
        for (VariableId to : later)
          if (role[to] == Role::observed) obs_later.push_back(to);
        if (obs_later.size() < 2) {
          feasible = false;
          break;
        }
        shuffle(obs_later, eng);
        for (int k = 0; k < 2; ++k)
          if (std::find(kids.begin(), kids.end(), obs_later[k]) == kids.end())
            kids.push_back(obs_later[k]);
      }
      std::sort(kids.begin(), kids.end());
      for (VariableId to : kids) model.edges.push_back({from, to, detail::random_weight(cfg, eng)});
    }
    if (!feasible) continue;
    model.normalize();

    if (!validate(model).empty()) continue;
    if (!detail::strong_enough(model, cfg.min_total_effect)) continue;
    const auto canon = canonicalize(model);
    if (!canon.certified) continue;
    if (static_cast<int>(canon.model.hidden_ids().size()) != cfg.n_hidden) continue;
    if (!detail::strong_enough(canon.model, cfg.min_total_effect)) continue;
    return model;
  }
  fail(ErrorCode::generation_exhausted, "random_model: retry budget exhausted");
}

}  // namespace lvlingam
