#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lvlingam/canonical.hpp"
#include "lvlingam/enumerate.hpp"
#include "lvlingam/estimate.hpp"
#include "lvlingam/generate.hpp"
#include "lvlingam/mixing.hpp"
#include "lvlingam/oica.hpp"

namespace lvlingam {

/// Worker count: LVLINGAM_THREADS if set and positive, else the hardware
/// concurrency.
inline unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LVLINGAM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<unsigned>(v);
  }
  return n;
}

/// Runs body(i) for i in [0, n). Results must be written to per-index slots;
/// the first exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Observed means in the row order of a basis.
inline std::vector<double> means_in_row_order(const MixingBasis& basis, const LvModel& model) {
  const auto mu = observed_means(model);
  const auto ids = model.observed_ids();
  std::vector<double> out;
  for (VariableId r : basis.row_ids) {
    const auto it = std::find(ids.begin(), ids.end(), r);
    if (it == ids.end()) fail(ErrorCode::invalid_input, "basis row is not an observed variable of the model");
    out.push_back(mu(it - ids.begin()));
  }
  return out;
}

/// Largest absolute difference between the observed-to-observed direct
/// effects of two models over the same observed ids; infinity if the
/// observed sets differ.
inline double observed_effect_distance(const LvModel& a, const LvModel& b) {
  const auto ids = a.observed_ids();
  if (ids != b.observed_ids()) return std::numeric_limits<double>::infinity();
  double worst = 0;
  for (VariableId i : ids)
    for (VariableId j : ids)
      if (i != j) worst = std::max(worst, std::abs(a.weight(j, i) - b.weight(j, i)));
  return worst;
}

// ---------------------------------------------------------------------------
// Exact bases: the equivalence set holds exactly one causally equivalent model.

struct Experiment1Config {
  int trials = 200;
  std::uint64_t seed = 0;
  int min_observed = 3, max_observed = 6;
  int min_hidden = 0, max_hidden = 2;
  int max_irrelevant_hidden = 1;
  double tol = 1e-9;
  GenerationConfig generation;
};

struct Experiment1Trial {
  int n_observed = 0;
  int n_hidden = 0;
  std::size_t set_size = 0;
  std::size_t causal_matches = 0;
  std::size_t observational_matches = 0;
  bool pass = false;
  std::string error;
};

struct Experiment1Report {
  std::vector<Experiment1Trial> trials;
  std::size_t passed = 0;
  double pass_rate() const { return trials.empty() ? 0.0 : double(passed) / double(trials.size()); }
  bool all_pass() const { return passed == trials.size(); }
};

inline Experiment1Trial experiment1_trial(const Experiment1Config& cfg, std::size_t t) {
  const Seed root = Seed(cfg.seed).split(static_cast<std::uint64_t>(t));
  auto eng = root.split(0).engine();
  GenerationConfig g = cfg.generation;
  g.n_observed = std::uniform_int_distribution<int>(cfg.min_observed, cfg.max_observed)(eng);
  g.n_hidden = std::uniform_int_distribution<int>(cfg.min_hidden, cfg.max_hidden)(eng);
  g.n_irrelevant_hidden = std::uniform_int_distribution<int>(0, std::max(cfg.max_irrelevant_hidden, 0))(eng);
  Experiment1Trial out;
  out.n_observed = g.n_observed;
  out.n_hidden = g.n_hidden;
  try {
    const auto canon = canonicalize(random_model(g, root.split(1)));
    const auto basis = scramble(observed_basis(canon), root.split(2));
    const auto set = enumerate_models(basis, exact_zero_pattern(basis),
                                      means_in_row_order(basis, canon.model));
    out.set_size = set.members.size();
    for (const auto& e : set.members) {
      if (causally_equivalent(e.model, canon, cfg.tol)) ++out.causal_matches;
      if (observationally_equivalent(e.model, canon, cfg.tol)) ++out.observational_matches;
    }
    out.pass = out.causal_matches == 1;
  } catch (const Error& e) {
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  return out;
}

inline Experiment1Report run_experiment1(const Experiment1Config& cfg) {
  if (cfg.trials < 1) fail(ErrorCode::invalid_input, "trials must be positive");
  if (cfg.min_observed > cfg.max_observed || cfg.min_hidden > cfg.max_hidden || cfg.min_hidden < 0)
    fail(ErrorCode::invalid_input, "invalid observed or hidden range");
  Experiment1Report rep;
  rep.trials.resize(static_cast<std::size_t>(cfg.trials));
  parallel_for(rep.trials.size(), [&](std::size_t t) { rep.trials[t] = experiment1_trial(cfg, t); });
  for (const auto& t : rep.trials) rep.passed += t.pass;
  return rep;
}

// ---------------------------------------------------------------------------
// Perturbed ensembles of exact bases.

struct Experiment2Config {
  int trials = 100;
  std::uint64_t seed = 0;
  std::vector<double> sigmas = {0.005};
  int k = 20;
  double close_tol = 0.05;
  int min_observed = 3, max_observed = 5;
  int n_hidden = 1;
  DiscoverOptions discover;
  GenerationConfig generation = [] {
    GenerationConfig g;
    g.min_total_effect = 0.2;
    return g;
  }();
};

struct Experiment2Trial {
  double sigma = 0;
  int n_observed = 0;
  bool zeros_recovered = false;
  std::size_t structures = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  bool recovered = false;
  std::string error;  // empty-result and similar failures
};

struct Experiment2Level {
  double sigma = 0;
  std::size_t trials = 0;
  std::size_t recovered = 0;
  std::size_t zeros_recovered = 0;
  std::size_t errors = 0;
  double recovery_rate() const { return trials ? double(recovered) / double(trials) : 0.0; }
  double zero_recovery_rate() const { return trials ? double(zeros_recovered) / double(trials) : 0.0; }
};

struct Experiment2Report {
  std::vector<Experiment2Level> levels;
  std::vector<Experiment2Trial> trials;  // level-major
};

inline Experiment2Report run_experiment2(const Experiment2Config& cfg) {
  if (cfg.trials < 1 || cfg.k < 2) fail(ErrorCode::invalid_input, "need trials >= 1 and k >= 2");
  if (cfg.sigmas.empty()) fail(ErrorCode::invalid_input, "no noise levels given");
  for (double s : cfg.sigmas)
    if (!(s >= 0)) fail(ErrorCode::invalid_input, "noise levels must be non-negative");
  const auto nt = static_cast<std::size_t>(cfg.trials);
  Experiment2Report rep;
  rep.trials.resize(nt * cfg.sigmas.size());
  parallel_for(nt, [&](std::size_t t) {
    const Seed root = Seed(cfg.seed).split(static_cast<std::uint64_t>(t));
    auto eng = root.split(0).engine();
    GenerationConfig g = cfg.generation;
    g.n_observed = std::uniform_int_distribution<int>(cfg.min_observed, cfg.max_observed)(eng);
    g.n_hidden = cfg.n_hidden;
    const auto canon = canonicalize(random_model(g, root.split(1)));
    const auto basis = scramble(observed_basis(canon), root.split(2));
    const auto truth = exact_zero_pattern(basis);
    const auto means = means_in_row_order(basis, canon.model);
    for (std::size_t l = 0; l < cfg.sigmas.size(); ++l) {
      Experiment2Trial& tr = rep.trials[l * nt + t];
      tr.sigma = cfg.sigmas[l];
      tr.n_observed = g.n_observed;
      // the same noise draws at every level, scaled by sigma
      const auto ens = perturb_ensemble(basis, cfg.k, tr.sigma, root.split(3));
      const auto aligned = align_ensemble(ens);
      tr.zeros_recovered = (test_zeros(aligned, cfg.discover.zero_z).mask == truth.mask).all();
      try {
        const auto res = discover(ens, means, cfg.discover);
        tr.structures = res.structures.size();
        for (const auto& s : res.structures)
          tr.best_distance = std::min(tr.best_distance, observed_effect_distance(s.model.model, canon.model));
        tr.recovered = tr.best_distance <= cfg.close_tol;
      } catch (const Error& e) {
        tr.error = std::string(to_string(e.code())) + ": " + e.what();
      }
    }
  });
  for (std::size_t l = 0; l < cfg.sigmas.size(); ++l) {
    Experiment2Level lv{cfg.sigmas[l], nt, 0, 0, 0};
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& tr = rep.trials[l * nt + t];
      lv.recovered += tr.recovered;
      lv.zeros_recovered += tr.zeros_recovered;
      lv.errors += !tr.error.empty();
    }
    rep.levels.push_back(lv);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Data to model: simulate, fit overcomplete bases, discover.

/// Three observed variables and one latent confounder:
///   x0 := 0.6 h + e0,  x1 := 0.9 h + e1,  x2 := 0.8 x0 - 0.9 h + e2
/// with symmetric bimodal mixture disturbances.
inline CanonicalModel experiment3_model() {
  LvModel m;
  for (VariableId id = 0; id < 4; ++id) m.variables.push_back({id, id != 3, 0.0});
  m.edges = {{0, 2, 0.8}, {3, 0, 0.6}, {3, 1, 0.9}, {3, 2, -0.9}};
  m.disturbances = {
      {0, bimodal_mixture(0.5, 0.85, 1.0)},
      {1, bimodal_mixture(0.5, 0.85, 0.7)},
      {2, bimodal_mixture(0.5, 0.85, 0.5)},
      {3, bimodal_mixture(0.5, 0.85, 1.0)},
  };
  m.normalize();
  return certify(std::move(m));
}

struct Experiment3Config {
  Eigen::Index n = 1000;
  std::uint64_t seed = 0;
  int seeds = 10;
  int k = 20;
  double coef_tol = 0.15;
  OicaConfig oica;
  DiscoverOptions discover;
};

struct Experiment3Run {
  std::uint64_t seed = 0;
  double loglik = 0;
  double noise_var = 0;
  bool converged = false;
  std::size_t members = 0;
  double zero_pattern_accuracy = 0;
  std::size_t structures = 0;
  std::size_t chosen_support = 0;
  bool structure_correct = false;
  double max_coef_error = std::numeric_limits<double>::infinity();
  bool success = false;
  std::vector<std::string> notes;
  std::string error;
};

struct Experiment3Report {
  std::vector<Experiment3Run> runs;
  std::size_t successes = 0;
  bool majority() const { return 2 * successes > runs.size(); }
};

namespace detail {

// Compares a discovered model with a canonical truth over the same observed
// ids: edge support and coefficients among observed variables, and hidden
// columns matched up to order and sign.
inline void score_structure(const CanonicalModel& truth, const LvModel& got, Experiment3Run& run,
                            bool symmetric_hidden) {
  const auto ids = truth.model.observed_ids();
  if (got.observed_ids() != ids) {
    run.notes.push_back("observed variables differ");
    return;
  }
  bool ok = true;
  double err = 0;
  for (VariableId i : ids)
    for (VariableId j : ids) {
      if (i == j) continue;
      const double t = truth.model.weight(j, i), g = got.weight(j, i);
      if ((t != 0) != (g != 0)) ok = false;
      err = std::max(err, std::abs(t - g));
    }
  const Eigen::MatrixXd th = hidden_columns(truth.model), gh = hidden_columns(got);
  if (th.cols() != gh.cols()) {
    run.notes.push_back("hidden count differs: " + std::to_string(gh.cols()) + " vs " +
                        std::to_string(th.cols()));
    ok = false;
  } else {
    std::vector<bool> used(gh.cols(), false);
    for (Eigen::Index c = 0; c < th.cols(); ++c) {
      Eigen::Index best = -1;
      double best_err = std::numeric_limits<double>::infinity();
      int best_sign = 1;
      for (Eigen::Index d = 0; d < gh.cols(); ++d) {
        if (used[d]) continue;
        for (int s : {1, -1}) {
          const double e = (th.col(c) - s * gh.col(d)).cwiseAbs().maxCoeff();
          if (e < best_err) best_err = e, best = d, best_sign = s;
        }
      }
      used[best] = true;
      for (Eigen::Index r = 0; r < th.rows(); ++r)
        if ((th(r, c) != 0) != (gh(r, best) != 0)) ok = false;
      err = std::max(err, best_err);
      if (best_sign < 0)
        run.notes.push_back("hidden column " + std::to_string(c) + " recovered with flipped sign");
    }
    if (symmetric_hidden && th.cols() > 0)
      run.notes.push_back("hidden sources are symmetric: the sign of their influence is indeterminate");
  }
  run.structure_correct = ok;
  run.max_coef_error = err;
}

}  // namespace detail

inline Experiment3Run experiment3_run(const Experiment3Config& cfg, const CanonicalModel& truth,
                                      std::uint64_t seed) {
  Experiment3Run run;
  run.seed = seed;
  std::vector<MogSource> sources;
  bool symmetric_hidden = true;
  for (VariableId id : truth.model.ids()) {
    sources.push_back(MogSource::from_disturbance(truth.model.disturbances.at(id)));
    if (!truth.model.is_observed(id)) symmetric_hidden = symmetric_hidden && sources.back().symmetric();
  }
  try {
    const Seed root(seed);
    const auto data = simulate(truth.model, cfg.n, root.split(0));
    OicaConfig oc = cfg.oica;
    oc.seed = root.split(1).value();
    FitResult full;
    const auto ens = bootstrap_fit(data, sources, oc, cfg.k, &full);
    run.loglik = full.loglik;
    run.noise_var = full.noise_var;
    run.converged = full.converged;
    run.members = ens.members.size();
    std::vector<double> means(full.means.data(), full.means.data() + full.means.size());
    const auto res = discover(ens, means, cfg.discover);

    // zero pattern accuracy after matching fitted columns to the true basis
    const auto true_basis = observed_basis(truth);
    const auto al = align_columns(true_basis, ens.members[ens.reference]);
    const auto want = exact_zero_pattern(true_basis).mask;
    std::size_t agree = 0;
    for (Eigen::Index i = 0; i < want.rows(); ++i)
      for (Eigen::Index j = 0; j < want.cols(); ++j) agree += want(i, j) == res.zeros.mask(i, al.permutation[j]);
    run.zero_pattern_accuracy = double(agree) / double(want.size());

    run.structures = res.structures.size();
    const StructureSummary* best = &res.structures.front();
    for (const auto& s : res.structures)
      if (s.support > best->support) best = &s;
    run.chosen_support = best->support;
    detail::score_structure(truth, best->model.model, run, symmetric_hidden);
    run.success = run.structure_correct && run.max_coef_error <= cfg.coef_tol;
  } catch (const Error& e) {
    run.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  return run;
}

inline Experiment3Report run_experiment3(const Experiment3Config& cfg,
                                         const CanonicalModel& truth = experiment3_model()) {
  if (cfg.seeds < 1 || cfg.k < 2 || cfg.n < 2) fail(ErrorCode::invalid_input, "need seeds >= 1, k >= 2, n >= 2");
  Experiment3Report rep;
  rep.runs.resize(static_cast<std::size_t>(cfg.seeds));
  parallel_for(rep.runs.size(), [&](std::size_t i) {
    rep.runs[i] = experiment3_run(cfg, truth, Seed(cfg.seed).split(static_cast<std::uint64_t>(i)).value());
  });
  for (const auto& r : rep.runs) rep.successes += r.success;
  return rep;
}

}  // namespace lvlingam
