#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "lvlingam/enumerate.hpp"
#include "lvlingam/mixing.hpp"
#include "lvlingam/rng.hpp"

namespace lvlingam {

/// Resampled estimates of one basis. Members share shape and row ids.
struct BasisEnsemble {
  std::vector<MixingBasis> members;
  std::size_t reference = 0;
};

/// Enumerated models of every ensemble member, grouped by classification.
struct ModelEnsemble {
  std::map<Classification, std::vector<EnumeratedModel>> groups;
};

struct DiscoverOptions {
  double zero_z = 3.0;
  double effect_z = 2.0;
  double quorum = 0.5;  // a classification must succeed on more than this share of members
  EnumerateOptions enumerate;
};

/// One surviving classification, averaged over the members where it succeeded.
struct StructureSummary {
  Classification hidden_columns;
  std::size_t support = 0;
  std::vector<VariableId> variable_ids;  // ascending; rows and columns of the matrices below
  std::vector<VariableId> hidden_ids;
  Eigen::MatrixXd mean_effects;  // rows = effects, cols = causes
  Eigen::MatrixXd sd_effects;
  BoolMatrix structure;          // entries surviving the effect test
  Eigen::MatrixXd hidden_weights;  // observed ids (ascending) x hidden ids, after pruning
  CanonicalModel model;          // pruned mean model
};

struct DiscoveryResult {
  ZeroPattern zeros;
  std::size_t members = 0;
  std::size_t ambiguous_alignments = 0;
  std::vector<StructureSummary> structures;
};

/// Nonzero iff |mean| / sd exceeds z. A zero sd keeps any nonzero mean.
inline bool significant(double mean, double sd, double z) {
  if (sd == 0.0) return mean != 0.0;
  return std::abs(mean) / sd > z;
}

namespace detail {

inline void check_ensemble(const BasisEnsemble& e) {
  if (e.members.size() < 2) fail(ErrorCode::degenerate_ensemble, "ensemble needs at least two members");
  if (e.reference >= e.members.size()) fail(ErrorCode::invalid_input, "reference index out of range");
  const auto& ref = e.members[e.reference];
  for (const auto& m : e.members)
    if (m.rows() != ref.rows() || m.cols() != ref.cols() || m.row_ids != ref.row_ids)
      fail(ErrorCode::invalid_input, "ensemble members differ in shape or row ids");
}

// Entry-wise mean and unbiased standard deviation.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> moments(const std::vector<Eigen::MatrixXd>& xs) {
  const auto k = static_cast<double>(xs.size());
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(xs[0].rows(), xs[0].cols());
  for (const auto& x : xs) mean += x;
  mean /= k;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(mean.rows(), mean.cols());
  if (xs.size() > 1) {
    for (const auto& x : xs) var += (x - mean).cwiseAbs2();
    var /= k - 1;
  }
  // identical members give exactly zero spread and their common value
  for (Eigen::Index i = 0; i < mean.rows(); ++i)
    for (Eigen::Index j = 0; j < mean.cols(); ++j) {
      const bool same = std::all_of(xs.begin(), xs.end(), [&](const auto& x) { return x(i, j) == xs[0](i, j); });
      if (same) {
        mean(i, j) = xs[0](i, j);
        var(i, j) = 0.0;
      }
    }
  return {mean, var.cwiseSqrt()};
}

}  // namespace detail

/// Aligns every member to the reference member's column order and signs.
inline BasisEnsemble align_ensemble(const BasisEnsemble& ensemble, std::size_t* ambiguous = nullptr) {
  detail::check_ensemble(ensemble);
  BasisEnsemble out;
  out.reference = ensemble.reference;
  const auto& ref = ensemble.members[ensemble.reference];
  for (const auto& m : ensemble.members) {
    const auto al = align_columns(ref, m);
    if (ambiguous && al.ambiguous) ++*ambiguous;
    out.members.push_back(apply_alignment(m, al));
  }
  return out;
}

/// Marks an entry zero unless its mean-to-spread ratio across an aligned
/// ensemble exceeds z.
inline ZeroPattern test_zeros(const BasisEnsemble& aligned, double z) {
  detail::check_ensemble(aligned);
  std::vector<Eigen::MatrixXd> xs;
  for (const auto& m : aligned.members) xs.push_back(m.matrix);
  const auto [mean, sd] = detail::moments(xs);
  ZeroPattern out{BoolMatrix(mean.rows(), mean.cols())};
  for (Eigen::Index i = 0; i < mean.rows(); ++i)
    for (Eigen::Index j = 0; j < mean.cols(); ++j) out.mask(i, j) = !significant(mean(i, j), sd(i, j), z);
  return out;
}

/// k noisy copies; every entry gets independent gaussian noise of scale
/// sigma * max|A|.
inline BasisEnsemble perturb_ensemble(const MixingBasis& basis, int k, double sigma, Seed seed) {
  if (k < 2) fail(ErrorCode::invalid_input, "perturb_ensemble needs k >= 2");
  if (!(sigma >= 0)) fail(ErrorCode::invalid_input, "noise scale must be non-negative");
  const double scale = sigma * max_abs(basis.matrix);
  BasisEnsemble out;
  for (int i = 0; i < k; ++i) {
    auto eng = seed.split(static_cast<std::uint64_t>(i)).engine();
    MixingBasis copy = basis;
    if (scale > 0)
      for (Eigen::Index c = 0; c < copy.cols(); ++c)
        for (Eigen::Index r = 0; r < copy.rows(); ++r) copy.matrix(r, c) += scale * standard_normal(eng);
    out.members.push_back(std::move(copy));
  }
  return out;
}

/// Runs enumeration on every aligned member with one shared zero pattern.
inline ModelEnsemble enumerate_ensemble(const BasisEnsemble& aligned, const ZeroPattern& zeros,
                                        std::span<const double> means, EnumerateOptions opt = {}) {
  opt.throw_on_empty = false;
  ModelEnsemble out;
  for (const auto& m : aligned.members)
    for (auto& e : enumerate_models(m, zeros, means, opt).members)
      out.groups[e.hidden_columns].push_back(std::move(e));
  return out;
}

/// Zero test, per-member enumeration, and pruning of direct effects that are
/// not distinguishable from zero across the ensemble.
inline DiscoveryResult discover(const BasisEnsemble& ensemble, std::span<const double> means,
                                const DiscoverOptions& opt = {}) {
  DiscoveryResult out;
  const auto aligned = align_ensemble(ensemble, &out.ambiguous_alignments);
  out.members = aligned.members.size();
  out.zeros = test_zeros(aligned, opt.zero_z);
  const auto models = enumerate_ensemble(aligned, out.zeros, means, opt.enumerate);

  for (const auto& [cls, group] : models.groups) {
    if (static_cast<double>(group.size()) <= opt.quorum * static_cast<double>(out.members)) continue;
    StructureSummary s;
    s.hidden_columns = cls;
    s.support = group.size();
    const auto& first = group.front().model.model;
    s.variable_ids = first.ids();
    s.hidden_ids = first.hidden_ids();

    std::vector<Eigen::MatrixXd> effects, constants, variances;
    for (const auto& e : group) {
      const auto b = direct_effects(e.model.model);
      if (b.rows != s.variable_ids) fail(ErrorCode::internal, "inconsistent variables within a classification");
      effects.push_back(b.values);
      Eigen::MatrixXd c(s.variable_ids.size(), 2);
      for (std::size_t i = 0; i < s.variable_ids.size(); ++i) {
        c(i, 0) = e.model.model.find(s.variable_ids[i])->constant;
        c(i, 1) = e.model.model.disturbances.at(s.variable_ids[i]).variance();
      }
      constants.push_back(c);
    }
    const auto [mean, sd] = detail::moments(effects);
    const auto cv = detail::moments(constants).first;
    s.mean_effects = mean;
    s.sd_effects = sd;
    s.structure = BoolMatrix(mean.rows(), mean.cols());
    for (Eigen::Index i = 0; i < mean.rows(); ++i)
      for (Eigen::Index j = 0; j < mean.cols(); ++j)
        s.structure(i, j) = mean(i, j) != 0.0 && significant(mean(i, j), sd(i, j), opt.effect_z);

    LvModel m;
    for (std::size_t i = 0; i < s.variable_ids.size(); ++i) {
      const VariableId id = s.variable_ids[i];
      const bool observed = first.is_observed(id);
      m.variables.push_back({id, observed, observed ? cv(i, 0) : 0.0});
      m.disturbances.emplace(id, Disturbance::unknown(observed ? cv(i, 1) : 1.0));
      for (std::size_t j = 0; j < s.variable_ids.size(); ++j)
        if (s.structure(i, j)) m.edges.push_back({s.variable_ids[j], id, mean(i, j)});
    }
    m.normalize();
    s.hidden_weights = hidden_columns(m);
    const bool canonical = is_canonical(m).canonical;
    s.model = {std::move(m), canonical};
    out.structures.push_back(std::move(s));
  }
  if (out.structures.empty())
    fail(ErrorCode::empty_result, "no classification succeeded on a quorum of ensemble members");
  return out;
}

}  // namespace lvlingam
