#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "lvlingam/distribution.hpp"
#include "lvlingam/estimate.hpp"
#include "lvlingam/mixing.hpp"
#include "lvlingam/model.hpp"
#include "lvlingam/rng.hpp"

namespace lvlingam {

/// Known source density: a gaussian mixture with zero mean and unit variance.
struct MogSource {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;

  /// Normalizes the weights, then shifts and scales to zero mean and unit
  /// variance.
  static MogSource standardized(std::vector<double> weights, std::vector<double> means,
                                std::vector<double> variances) {
    const std::size_t k = weights.size();
    if (k == 0 || means.size() != k || variances.size() != k)
      fail(ErrorCode::invalid_input, "mixture source needs matching non-empty component arrays");
    double wsum = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!(weights[i] > 0) || !(variances[i] > 0))
        fail(ErrorCode::invalid_input, "mixture weights and variances must be positive");
      wsum += weights[i];
    }
    double mu = 0;
    for (std::size_t i = 0; i < k; ++i) {
      weights[i] /= wsum;
      mu += weights[i] * means[i];
    }
    double var = 0;
    for (std::size_t i = 0; i < k; ++i) var += weights[i] * ((means[i] - mu) * (means[i] - mu) + variances[i]);
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < k; ++i) {
      means[i] = (means[i] - mu) / sd;
      variances[i] /= var;
    }
    return {std::move(weights), std::move(means), std::move(variances)};
  }

  static MogSource from_disturbance(const Disturbance& d) {
    if (d.family() != Family::gaussian_mixture)
      fail(ErrorCode::invalid_input, "only gaussian-mixture disturbances have a mixture source");
    std::vector<double> w, m, v;
    const auto& p = d.params();
    for (std::size_t i = 0; i + 2 < p.size(); i += 3) {
      w.push_back(p[i]);
      m.push_back(p[i + 1]);
      v.push_back(p[i + 2]);
    }
    return standardized(std::move(w), std::move(m), std::move(v));
  }

  std::size_t components() const { return weights.size(); }
  bool is_gaussian() const { return Disturbance::gaussian_mixture(weights, means, variances).is_gaussian(); }
  bool symmetric() const { return Disturbance::gaussian_mixture(weights, means, variances).symmetric(); }
};

struct OicaConfig {
  double noise_var = -1.0;  // initial sensor noise variance; <= 0 picks 1% of the mean data variance
  double noise_floor = 1e-6;
  bool learn_noise = true;
  int max_iter = 2000;
  double tol = 1e-6;  // on the per-sample log-likelihood gain
  int restarts = 10;
  int burn_in = 100;  // iterations per restart before the best one continues
  std::uint64_t seed = 0;
  std::size_t max_configurations = 1024;
};

struct FitResult {
  MixingBasis basis;
  Eigen::VectorXd means;  // data means removed before fitting
  double loglik = -std::numeric_limits<double>::infinity();
  double noise_var = 0.0;
  int iterations = 0;
  bool converged = false;
  int restart = -1;
  std::vector<double> trace;  // log-likelihood at the start of each iteration
};

namespace detail {

// One joint assignment of mixture components to all sources.
struct Configuration {
  double log_weight = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

inline std::vector<Configuration> configurations(const std::vector<MogSource>& sources,
                                                 std::size_t budget) {
  std::size_t total = 1;
  for (const auto& s : sources) {
    total *= s.components();
    if (total > budget)
      fail(ErrorCode::budget_exceeded, "number of mixture configurations exceeds the budget");
  }
  const auto n = static_cast<Eigen::Index>(sources.size());
  std::vector<Configuration> out;
  std::vector<std::size_t> digit(sources.size(), 0);
  for (std::size_t q = 0; q < total; ++q) {
    Configuration c{0, Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& s = sources[j];
      c.log_weight += std::log(s.weights[digit[j]]);
      c.mean(j) = s.means[digit[j]];
      c.var(j) = s.variances[digit[j]];
    }
    out.push_back(std::move(c));
    for (std::size_t j = 0; j < digit.size(); ++j) {
      if (++digit[j] < sources[j].components()) break;
      digit[j] = 0;
    }
  }
  return out;
}

// Per-configuration gaussian in observation space and the posterior gain.
struct ConfigurationState {
  Eigen::VectorXd x_mean;
  Eigen::MatrixXd precision;
  double log_norm = 0;  // log weight - (d log 2 pi + log det) / 2
  Eigen::MatrixXd gain;           // sources x observed
  Eigen::MatrixXd posterior_cov;  // sources x sources
};

inline std::vector<ConfigurationState> prepare(const Eigen::MatrixXd& a,
                                               const std::vector<Configuration>& configs,
                                               double noise_var, bool with_posterior) {
  const auto d = a.rows();
  std::vector<ConfigurationState> out;
  out.reserve(configs.size());
  for (const auto& c : configs) {
    ConfigurationState s;
    s.x_mean = a * c.mean;
    const Eigen::MatrixXd av = a * c.var.asDiagonal();
    Eigen::MatrixXd cov = av * a.transpose();
    cov.diagonal().array() += noise_var;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      fail(ErrorCode::numerical, "configuration covariance is not positive definite");
    s.precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
    const double logdet = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    s.log_norm = c.log_weight - 0.5 * (static_cast<double>(d) * std::log(2 * std::numbers::pi) + logdet);
    if (with_posterior) {
      s.gain = av.transpose() * s.precision;
      s.posterior_cov = Eigen::MatrixXd(c.var.asDiagonal()) - s.gain * av;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Log of weight times gaussian density, per sample, for one configuration.
inline Eigen::VectorXd configuration_logdens(const ConfigurationState& s, const Eigen::MatrixXd& x,
                                             Eigen::MatrixXd& resid) {
  resid = x.rowwise() - s.x_mean.transpose();
  return (s.log_norm - 0.5 * (resid * s.precision).cwiseProduct(resid).rowwise().sum().array()).matrix();
}

// Row-wise log-sum-exp of an n x q matrix.
inline Eigen::VectorXd row_log_sum_exp(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd mx = m.rowwise().maxCoeff();
  return mx + ((m.colwise() - mx).array().exp().rowwise().sum().log()).matrix();
}

inline void check_shapes(const MixingBasis& basis, const std::vector<MogSource>& sources,
                         Eigen::Index data_cols) {
  if (static_cast<Eigen::Index>(sources.size()) != basis.cols())
    fail(ErrorCode::invalid_input, "source count must equal the number of basis columns");
  if (data_cols != basis.rows())
    fail(ErrorCode::invalid_input, "data columns must equal the number of basis rows");
}

}  // namespace detail

/// Exact log-density of each row of x under x = A s + noise, with mixture
/// sources and isotropic gaussian noise, summing over every joint component
/// configuration.
inline Eigen::VectorXd sample_logliks(const MixingBasis& basis, const std::vector<MogSource>& sources,
                                      const Eigen::MatrixXd& x, double noise_var,
                                      std::size_t max_configurations = 1024) {
  detail::check_shapes(basis, sources, x.cols());
  const auto configs = detail::configurations(sources, max_configurations);
  const auto states = detail::prepare(basis.matrix, configs, noise_var, false);
  Eigen::MatrixXd logr(x.rows(), static_cast<Eigen::Index>(states.size()));
  Eigen::MatrixXd resid;
  for (std::size_t q = 0; q < states.size(); ++q)
    logr.col(static_cast<Eigen::Index>(q)) = detail::configuration_logdens(states[q], x, resid);
  const Eigen::VectorXd out = detail::row_log_sum_exp(logr);
  return out;
}

inline double loglik(const MixingBasis& basis, const std::vector<MogSource>& sources,
                     const DataMatrix& data, double noise_var) {
  return sample_logliks(basis, sources, data.values, noise_var).sum();
}

namespace detail {

// One EM pass: returns the log-likelihood of the current parameters and
// updates them in place.
inline double em_step(Eigen::MatrixXd& a, double& noise_var, const Eigen::MatrixXd& x,
                      const std::vector<Configuration>& configs, const OicaConfig& cfg) {
  const auto n = x.rows(), k = a.cols();
  const auto states = prepare(a, configs, noise_var, true);
  const auto nq = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd logr(n, nq);
  std::vector<Eigen::MatrixXd> resid(states.size());
  for (Eigen::Index q = 0; q < nq; ++q) logr.col(q) = configuration_logdens(states[q], x, resid[q]);
  const Eigen::VectorXd lse = row_log_sum_exp(logr);
  const Eigen::MatrixXd resp = (logr.colwise() - lse).array().exp().matrix();

  Eigen::MatrixXd es = Eigen::MatrixXd::Zero(n, k);
  Eigen::MatrixXd sss = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index q = 0; q < nq; ++q) {
    // posterior source means for every sample under configuration q
    Eigen::MatrixXd post = resid[q] * states[q].gain.transpose();
    post.rowwise() += configs[q].mean.transpose();
    es += resp.col(q).asDiagonal() * post;
    sss.noalias() += post.transpose() * resp.col(q).asDiagonal() * post;
    sss += resp.col(q).sum() * states[q].posterior_cov;
  }
  const Eigen::MatrixXd sxs = x.transpose() * es;

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(sss);
  if (ldlt.info() != Eigen::Success) fail(ErrorCode::numerical, "singular source second moments");
  const Eigen::MatrixXd a_new = ldlt.solve(sxs.transpose()).transpose();
  if (!a_new.allFinite()) fail(ErrorCode::numerical, "non-finite mixing update");
  a = a_new;
  if (cfg.learn_noise) {
    const double resid_var = (x.squaredNorm() - (a_new * sxs.transpose()).trace()) /
                             static_cast<double>(n * x.cols());
    noise_var = std::max(resid_var, cfg.noise_floor);
  }
  return lse.sum();
}

}  // namespace detail

/// Maximum-likelihood overcomplete basis for known source densities, by EM
/// with random restarts. The data are centered first; their means are
/// returned with the fit.
inline FitResult fit(const DataMatrix& data, const std::vector<MogSource>& sources,
                     const OicaConfig& cfg, const std::optional<MixingBasis>& init = std::nullopt) {
  const auto d = data.values.cols();
  const auto k = static_cast<Eigen::Index>(sources.size());
  if (data.n() < 2) fail(ErrorCode::invalid_input, "need at least two samples");
  if (k < d) fail(ErrorCode::invalid_input, "need at least as many sources as observed variables");
  if (!(cfg.noise_floor > 0)) fail(ErrorCode::invalid_input, "noise floor must be positive");
  if (init) detail::check_shapes(*init, sources, d);
  const auto configs = detail::configurations(sources, cfg.max_configurations);

  FitResult best;
  best.means = data.values.colwise().mean().transpose();
  const Eigen::MatrixXd x = data.values.rowwise() - best.means.transpose();
  const double total_var = x.squaredNorm() / static_cast<double>(x.rows());
  const double noise0 = cfg.noise_var > 0 ? cfg.noise_var
                                          : std::max(0.01 * total_var / static_cast<double>(d), cfg.noise_floor);

  struct Run {
    Eigen::MatrixXd a;
    double noise = 0;
    std::vector<double> trace;
    bool converged = false;
    bool failed = false;
  };
  const auto advance = [&](Run& run, int limit) {
    try {
      while (!run.converged && static_cast<int>(run.trace.size()) < limit) {
        const double ll = detail::em_step(run.a, run.noise, x, configs, cfg);
        if (!run.trace.empty() && (ll - run.trace.back()) / static_cast<double>(x.rows()) < cfg.tol)
          run.converged = true;
        run.trace.push_back(ll);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numerical) throw;
      run.failed = true;
    }
  };

  // every restart gets a short burn-in; the best one then runs to the budget
  const int restarts = std::max(cfg.restarts, 1);
  const int burn_in = restarts > 1 ? std::min(cfg.burn_in, cfg.max_iter) : cfg.max_iter;
  std::vector<Run> runs(static_cast<std::size_t>(restarts));
  int chosen = -1;
  for (int r = 0; r < restarts; ++r) {
    Run& run = runs[r];
    if (r == 0 && init) {
      run.a = init->matrix;
    } else {
      auto eng = Seed(cfg.seed).split(static_cast<std::uint64_t>(r)).engine();
      run.a = Eigen::MatrixXd::NullaryExpr(d, k, [&] { return standard_normal(eng); });
      run.a *= std::sqrt(total_var / run.a.squaredNorm());
    }
    run.noise = noise0;
    advance(run, burn_in);
    if (!run.failed && !run.trace.empty() && (chosen < 0 || run.trace.back() > runs[chosen].trace.back()))
      chosen = r;
  }
  if (chosen < 0) fail(ErrorCode::numerical, "every EM restart degenerated");
  Run& run = runs[chosen];
  advance(run, cfg.max_iter);
  if (run.failed) fail(ErrorCode::numerical, "EM degenerated");

  best.basis = MixingBasis{data.columns, run.a, {}};
  best.loglik = sample_logliks(best.basis, sources, x, run.noise, cfg.max_configurations).sum();
  best.noise_var = run.noise;
  best.iterations = static_cast<int>(run.trace.size());
  best.converged = run.converged;
  best.restart = chosen;
  best.trace = std::move(run.trace);
  return best;
}

/// Refits on k row-resampled copies of the data, each started from the
/// full-data fit, and aligns every member to it.
inline BasisEnsemble bootstrap_fit(const DataMatrix& data, const std::vector<MogSource>& sources,
                                   const OicaConfig& cfg, int k, FitResult* full_fit = nullptr) {
  if (k < 2) fail(ErrorCode::invalid_input, "bootstrap needs k >= 2");
  const FitResult full = fit(data, sources, cfg);
  OicaConfig member_cfg = cfg;
  member_cfg.restarts = 1;
  BasisEnsemble out;
  out.members.push_back(full.basis);
  const Eigen::Index n = data.n();
  for (int b = 0; b < k; ++b) {
    auto eng = Seed(cfg.seed).split({0xb007, static_cast<std::uint64_t>(b)}).engine();
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    DataMatrix resampled{data.columns, Eigen::MatrixXd(n, data.values.cols())};
    for (Eigen::Index i = 0; i < n; ++i) resampled.values.row(i) = data.values.row(pick(eng));
    try {
      const auto r = fit(resampled, sources, member_cfg, full.basis);
      if (!r.converged) continue;
      out.members.push_back(apply_alignment(r.basis, align_columns(full.basis, r.basis)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numerical) throw;
    }
  }
  // the full-data fit is only the alignment reference
  out.members.erase(out.members.begin());
  if (out.members.size() < 2)
    fail(ErrorCode::numerical, "fewer than two bootstrap fits converged");
  if (full_fit) *full_fit = full;
  return out;
}

}  // namespace lvlingam
