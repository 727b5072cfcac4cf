#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lvlingam/canonical.hpp"
#include "lvlingam/mixing.hpp"
#include "lvlingam/model.hpp"

namespace lvlingam {

/// Sorted indices of the basis columns designated as hidden sources.
using Classification = std::vector<int>;

struct EnumeratedModel {
  Classification hidden_columns;
  // column_variable[c]: the variable whose disturbance basis column c is.
  std::vector<VariableId> column_variable;
  CanonicalModel model;
};

struct EquivalenceSet {
  std::vector<EnumeratedModel> members;
};

struct EnumerateOptions {
  double struct_tol = 1e-9;
  double duplicate_tol = 1e-9;
  bool throw_on_empty = true;
};

/// Number of ways to split n_observed + n_hidden columns into the two roles.
inline std::uint64_t classification_count(int n_observed, int n_hidden) {
  if (n_observed < 1 || n_hidden < 0)
    fail(ErrorCode::invalid_input, "classification_count needs n_observed >= 1, n_hidden >= 0");
  if (n_observed + n_hidden > 20)
    fail(ErrorCode::budget_exceeded, "classification_count: more than 20 columns");
  const int n = n_observed + n_hidden;
  const int k = std::min(n_observed, n_hidden);
  std::uint64_t c = 1;
  for (int i = 1; i <= k; ++i) c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return c;
}

/// Builds the canonical model implied by one classification of the basis
/// columns, or nothing if the classification is inconsistent.
inline std::optional<EnumeratedModel> evaluate_classification(const MixingBasis& basis,
                                                              const ZeroPattern& zero,
                                                              std::span<const double> means,
                                                              const Classification& hidden_cols,
                                                              const EnumerateOptions& opt = {}) {
  const Eigen::Index n_obs = basis.rows();
  const Eigen::Index n_src = basis.cols();
  const Eigen::Index n_hid = n_src - n_obs;
  if (static_cast<Eigen::Index>(hidden_cols.size()) != n_hid)
    fail(ErrorCode::invalid_input, "classification size must equal columns minus rows");

  // Hidden-designated columns first, then the rest in their original order.
  std::vector<int> cols(hidden_cols.begin(), hidden_cols.end());
  for (int c = 0; c < n_src; ++c)
    if (!std::binary_search(hidden_cols.begin(), hidden_cols.end(), c)) cols.push_back(c);

  // Augment with the unobserved top block: identity over the hidden columns.
  const Eigen::Index m = n_src;
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(m, m);
  BoolMatrix nonzero = BoolMatrix::Constant(m, m, false);
  for (Eigen::Index k = 0; k < n_hid; ++k) {
    full(k, k) = 1.0;
    nonzero(k, k) = true;
  }
  for (Eigen::Index i = 0; i < n_obs; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const bool nz = !zero.mask(i, cols[j]);
      nonzero(n_hid + i, j) = nz;
      full(n_hid + i, j) = nz ? basis.matrix(i, cols[j]) : 0.0;
    }

  const auto tri = can_permute_lower_triangular(nonzero);
  if (!tri.ok) return std::nullopt;

  // Variable r (row r of the augmented matrix) owns column source_col[r].
  std::vector<Eigen::Index> source_col(m);
  for (Eigen::Index k = 0; k < m; ++k) source_col[tri.row_perm[k]] = tri.col_perm[k];

  // Unit-diagonal mixing in variable order, permuted to lower triangular.
  Eigen::VectorXd scale(m);
  Eigen::MatrixXd lower(m, m);
  BoolMatrix mixing_nz(m, m);
  for (Eigen::Index r = 0; r < m; ++r) scale(r) = full(r, source_col[r]);
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index l = 0; l < m; ++l) {
      const auto r = tri.row_perm[k], v = tri.row_perm[l];
      lower(k, l) = full(r, source_col[v]) / scale(v);
      mixing_nz(r, v) = nonzero(r, source_col[v]);
    }
  const Eigen::MatrixXd inv =
      lower.triangularView<Eigen::UnitLower>().solve(Eigen::MatrixXd::Identity(m, m));
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index l = 0; l < k; ++l) {
      const double w = -inv(k, l);
      if (std::abs(w) >= opt.struct_tol) b(tri.row_perm[k], tri.row_perm[l]) = w;
    }

  // Stability: a mixing entry is nonzero exactly when a directed path exists.
  const auto reach = detail::reachability(b.array() != 0.0);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j && mixing_nz(i, j) != reach(i, j)) return std::nullopt;

  VariableId next = basis.row_ids.empty()
                        ? 0
                        : *std::max_element(basis.row_ids.begin(), basis.row_ids.end()) + 1;
  std::vector<VariableId> var_id(m);
  for (Eigen::Index k = 0; k < n_hid; ++k) var_id[k] = next++;
  for (Eigen::Index i = 0; i < n_obs; ++i) var_id[n_hid + i] = basis.row_ids[i];

  // Lowest-id child of each latent gets a positive weight.
  for (Eigen::Index h = 0; h < n_hid; ++h) {
    Eigen::Index first = -1;
    for (Eigen::Index r = n_hid; r < m; ++r)
      if (b(r, h) != 0.0 && (first < 0 || var_id[r] < var_id[first])) first = r;
    if (first >= 0 && b(first, h) < 0) b.col(h) *= -1.0;
  }

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n_obs);
  for (Eigen::Index i = 0; i < n_obs && i < static_cast<Eigen::Index>(means.size()); ++i) mu(i) = means[i];
  const Eigen::MatrixXd b_oo = b.bottomRightCorner(n_obs, n_obs);
  const Eigen::VectorXd constants = mu - b_oo * mu;

  LvModel model;
  for (Eigen::Index r = 0; r < m; ++r) {
    const bool observed = r >= n_hid;
    model.variables.push_back({var_id[r], observed, observed ? constants(r - n_hid) : 0.0});
    model.disturbances.emplace(var_id[r],
                               Disturbance::unknown(observed ? scale(r) * scale(r) : 1.0));
  }
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (b(i, j) != 0.0) model.edges.push_back({var_id[j], var_id[i], b(i, j)});
  model.normalize();
  if (!is_canonical(model).canonical) return std::nullopt;

  EnumeratedModel out;
  out.hidden_columns = hidden_cols;
  out.column_variable.assign(n_src, -1);
  for (Eigen::Index r = 0; r < m; ++r) out.column_variable[cols[source_col[r]]] = var_id[r];
  out.model = {std::move(model), true};
  return out;
}

/// Every canonical model compatible with the basis and its zero pattern, one
/// candidate per classification of columns into hidden and observed sources,
/// in lexicographic order of the hidden column sets.
inline EquivalenceSet enumerate_models(const MixingBasis& basis, const ZeroPattern& zero,
                                       std::span<const double> means,
                                       const EnumerateOptions& opt = {}) {
  if (zero.mask.rows() != basis.rows() || zero.mask.cols() != basis.cols())
    fail(ErrorCode::invalid_input, "zero pattern shape does not match the basis");
  if (basis.cols() < basis.rows() || basis.rows() < 1)
    fail(ErrorCode::invalid_input, "basis must have at least as many columns as rows");
  if (static_cast<Eigen::Index>(basis.row_ids.size()) != basis.rows())
    fail(ErrorCode::invalid_input, "row id count does not match the basis");
  if (!means.empty() && static_cast<Eigen::Index>(means.size()) != basis.rows())
    fail(ErrorCode::invalid_input, "means count does not match the basis rows");
  const int n_src = static_cast<int>(basis.cols());
  const int n_hid = n_src - static_cast<int>(basis.rows());
  classification_count(static_cast<int>(basis.rows()), n_hid);

  EquivalenceSet out;
  Classification pick(n_hid);
  std::iota(pick.begin(), pick.end(), 0);
  for (;;) {
    if (auto found = evaluate_classification(basis, zero, means, pick, opt)) {
      const bool duplicate = std::any_of(out.members.begin(), out.members.end(), [&](const auto& e) {
        return causally_equivalent(e.model, found->model, opt.duplicate_tol) &&
               observationally_equivalent(e.model, found->model, opt.duplicate_tol);
      });
      if (!duplicate) out.members.push_back(std::move(*found));
    }
    // next combination in lexicographic order
    int i = n_hid - 1;
    while (i >= 0 && pick[i] == n_src - n_hid + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < n_hid; ++j) pick[j] = pick[j - 1] + 1;
  }
  if (out.members.empty() && opt.throw_on_empty)
    fail(ErrorCode::empty_result, "no classification yields a stable canonical model");
  return out;
}

}  // namespace lvlingam
