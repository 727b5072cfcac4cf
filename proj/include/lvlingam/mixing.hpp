#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lvlingam/canonical.hpp"
#include "lvlingam/model.hpp"
#include "lvlingam/rng.hpp"

namespace lvlingam {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Cosine-similarity gap below which a column matching is flagged ambiguous.
inline constexpr double align_tol = 1e-6;

enum class SourceKind { unknown, hidden, observed_disturbance };

struct ColumnTag {
  SourceKind kind = SourceKind::unknown;
  VariableId id = -1;

  friend bool operator==(const ColumnTag&, const ColumnTag&) = default;
};

/// Observed rows of a mixing matrix; every column is a unit-variance source.
struct MixingBasis {
  std::vector<VariableId> row_ids;
  Eigen::MatrixXd matrix;
  std::vector<ColumnTag> col_tags;  // empty, or one per column

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }
};

/// true marks an entry that is structurally zero.
struct ZeroPattern {
  BoolMatrix mask;
};

struct TriangularPermutation {
  bool ok = false;
  // Position k of the permuted matrix holds row row_perm[k] and column col_perm[k].
  std::vector<int> row_perm;
  std::vector<int> col_perm;
};

struct Alignment {
  std::vector<int> permutation;  // reference column i <- other column permutation[i]
  std::vector<int> signs;
  double total_similarity = 0.0;
  bool ambiguous = false;
};

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// (I - B)^-1 with latents first (ascending id) and observed variables in
/// causal order. Columns are scaled to unit-variance sources, so the latent
/// block is an identity beside zeros.
inline LabeledMatrix full_mixing(const CanonicalModel& canon) {
  const auto& model = canon.model;
  const auto t = total_effects(model);
  std::vector<VariableId> order = model.hidden_ids();
  for (VariableId v : causal_order(model))
    if (model.is_observed(v)) order.push_back(v);
  LabeledMatrix a;
  a.rows = a.cols = order;
  const auto n = static_cast<Eigen::Index>(order.size());
  a.values.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double sd = std::sqrt(model.disturbances.at(order[j]).variance());
    for (Eigen::Index i = 0; i < n; ++i) a.values(i, j) = t.at(order[i], order[j]) * sd;
  }
  return a;
}

/// Observed rows of full_mixing, with ground-truth column tags.
inline MixingBasis observed_basis(const CanonicalModel& canon) {
  const auto full = full_mixing(canon);
  const auto nh = static_cast<Eigen::Index>(canon.model.hidden_ids().size());
  MixingBasis b;
  b.row_ids.assign(full.rows.begin() + nh, full.rows.end());
  b.matrix = full.values.bottomRows(full.values.rows() - nh);
  for (Eigen::Index j = 0; j < full.values.cols(); ++j)
    b.col_tags.push_back({j < nh ? SourceKind::hidden : SourceKind::observed_disturbance,
                          full.cols[j]});
  return b;
}

/// Random row permutation, column permutation and column signs, as an ICA
/// estimate would return them. Column tags are erased.
inline MixingBasis scramble(const MixingBasis& basis, Seed seed) {
  auto eng = seed.engine();
  std::vector<int> rp(basis.rows()), cp(basis.cols());
  std::iota(rp.begin(), rp.end(), 0);
  std::iota(cp.begin(), cp.end(), 0);
  shuffle(rp, eng);
  shuffle(cp, eng);
  MixingBasis out;
  out.matrix.resize(basis.rows(), basis.cols());
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    const double s = coin(eng, 0.5) ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < basis.rows(); ++i) out.matrix(i, j) = s * basis.matrix(rp[i], cp[j]);
  }
  for (int r : rp) out.row_ids.push_back(basis.row_ids[r]);
  return out;
}

inline ZeroPattern exact_zero_pattern(const MixingBasis& basis, double tol = 0.0) {
  return {basis.matrix.array().abs() <= tol};
}

/// Decides whether independent row and column permutations make the square
/// pattern (true = nonzero) lower triangular with a nonzero diagonal.
///
/// The first row of any such arrangement has exactly one nonzero. Conversely,
/// if a remaining row has a single nonzero, moving it and its column to the
/// front of a valid arrangement keeps it valid, so choosing any such row never
/// loses a solution.
inline TriangularPermutation can_permute_lower_triangular(const BoolMatrix& pattern) {
  const auto n = pattern.rows();
  if (pattern.cols() != n) fail(ErrorCode::invalid_input, "pattern must be square");
  TriangularPermutation out;
  std::vector<bool> row_used(n, false), col_used(n, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    int pick_row = -1, pick_col = -1;
    for (Eigen::Index r = 0; r < n && pick_row < 0; ++r) {
      if (row_used[r]) continue;
      int count = 0, last = -1;
      for (Eigen::Index c = 0; c < n; ++c)
        if (!col_used[c] && pattern(r, c)) {
          ++count;
          last = static_cast<int>(c);
        }
      if (count == 1) {
        pick_row = static_cast<int>(r);
        pick_col = last;
      }
    }
    if (pick_row < 0) return {false, {}, {}};
    row_used[pick_row] = col_used[pick_col] = true;
    out.row_perm.push_back(pick_row);
    out.col_perm.push_back(pick_col);
  }
  out.ok = true;
  return out;
}

/// Greedy matching of columns by absolute cosine similarity.
inline Alignment align_columns(const MixingBasis& reference, const MixingBasis& other) {
  if (reference.rows() != other.rows() || reference.cols() != other.cols())
    fail(ErrorCode::invalid_input, "align_columns: bases differ in shape");
  if (reference.row_ids != other.row_ids)
    fail(ErrorCode::invalid_input, "align_columns: bases differ in row ids");
  const auto n = reference.cols();
  Eigen::MatrixXd cos(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = reference.matrix.col(i).norm() * other.matrix.col(j).norm();
      cos(i, j) = d > 0 ? reference.matrix.col(i).dot(other.matrix.col(j)) / d : 0.0;
    }
  const Eigen::MatrixXd sim = cos.cwiseAbs();

  Alignment out;
  out.permutation.assign(n, -1);
  out.signs.assign(n, 1);
  std::vector<bool> ref_used(n, false), oth_used(n, false);
  for (Eigen::Index step = 0; step < n; ++step) {
    double best = -1;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (!ref_used[i] && !oth_used[j] && sim(i, j) > best) {
          best = sim(i, j);
          bi = i;
          bj = j;
        }
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != bj && !oth_used[k] && best - sim(bi, k) < align_tol) out.ambiguous = true;
      if (k != bi && !ref_used[k] && best - sim(k, bj) < align_tol) out.ambiguous = true;
    }
    ref_used[bi] = oth_used[bj] = true;
    out.permutation[bi] = static_cast<int>(bj);
    out.signs[bi] = cos(bi, bj) < 0 ? -1 : 1;
    out.total_similarity += best;
  }
  return out;
}

inline MixingBasis apply_alignment(const MixingBasis& other, const Alignment& alignment) {
  MixingBasis out;
  out.row_ids = other.row_ids;
  out.matrix.resize(other.rows(), other.cols());
  for (Eigen::Index i = 0; i < other.cols(); ++i) {
    out.matrix.col(i) = alignment.signs[i] * other.matrix.col(alignment.permutation[i]);
    if (!other.col_tags.empty()) out.col_tags.push_back(other.col_tags[alignment.permutation[i]]);
  }
  return out;
}

}  // namespace lvlingam
