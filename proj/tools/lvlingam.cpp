#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "lvlingam/io.hpp"

using namespace lvlingam;
using json = io::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failed_check = 1;
constexpr int exit_invalid = 2;
constexpr int exit_exhausted = 3;
constexpr int exit_operation = 4;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return exit_invalid;
    case ErrorCode::generation_exhausted: return exit_exhausted;
    default: return exit_operation;
  }
}

void report_error(std::string_view code, const std::string& message, const json& detail = nullptr) {
  json j = {{"error", {{"code", code}, {"message", message}}}};
  if (!detail.is_null()) j["error"]["detail"] = detail;
  std::cerr << j.dump() << std::endl;
}

// Input and output paths plus everything the manifest records.
struct Run {
  CLI::App* app = nullptr;
  std::string out = "-";
  std::string manifest;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  bool seeded = false;
};

json flags_of(const CLI::App& app) {
  json flags = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_name() == "--help") continue;
    std::string name = opt->get_name();
    name.erase(0, name.find_first_not_of('-'));
    if (opt->count() > 0) {
      const auto& r = opt->results();
      flags[name] = r.size() == 1 ? json(r[0]) : json(r);
    } else if (!opt->get_default_str().empty()) {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

void write_manifest(const Run& run, double seconds) {
  std::string path = run.manifest;
  if (path.empty() && run.out != "-") path = run.out + ".manifest.json";
  if (path.empty()) return;
  json m = {{"command", run.app->get_name()},
            {"flags", flags_of(*run.app)},
            {"seed", run.seeded ? json(run.seed) : json(nullptr)},
            {"inputs", run.inputs},
            {"outputs", run.outputs},
            {"version", LVLINGAM_VERSION},
            {"duration_seconds", seconds}};
  io::write_json(path, m);
}

LvModel read_valid_model(const std::string& path) {
  auto model = io::model_from_json(io::read_json(path));
  const auto problems = validate(model);
  if (!problems.empty()) {
    json detail = json::array();
    for (const auto& v : problems) detail.push_back({{"kind", v.kind}, {"detail", v.detail}, {"variables", v.variables}});
    report_error(to_string(ErrorCode::invalid_input), "model in '" + path + "' fails validation", detail);
    throw CLI::RuntimeError(exit_invalid);
  }
  return model;
}

std::string table_line(std::initializer_list<std::string> cells) {
  std::string s;
  for (const auto& c : cells) {
    std::string cell = c;
    if (cell.size() < 14) cell.insert(0, 14 - cell.size(), ' ');
    s += cell;
  }
  return s + "\n";
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void add_output(CLI::App* sub, Run& run, const std::string& what) {
  sub->add_option("-o,--out", run.out, what + " path, '-' for stdout")->capture_default_str();
  sub->add_option("--manifest", run.manifest, "run manifest path (default: <out>.manifest.json)");
}

void add_seed(CLI::App* sub, Run& run, bool required) {
  auto* opt = sub->add_option("--seed", run.seed, "random seed");
  if (required) opt->required();
  else opt->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-variable LiNGAM: canonical models, equivalence sets and estimation"};
  app.set_version_flag("--version", std::string(LVLINGAM_VERSION));
  app.require_subcommand(1);

  Run run;
  std::function<int()> action;
  const auto bind = [&](CLI::App* sub, std::function<int()> body) {
    sub->callback([&run, &action, sub, body] {
      run.app = sub;
      action = body;
    });
  };

  // generate ---------------------------------------------------------------
  GenerationConfig gen;
  auto* generate = app.add_subcommand("generate", "random latent-variable model");
  generate->add_option("--n-observed", gen.n_observed, "observed variables")->required()->check(CLI::Range(2, 64));
  generate->add_option("--n-hidden", gen.n_hidden, "latents kept by canonicalization")->required()->check(CLI::NonNegativeNumber);
  generate->add_option("--n-irrelevant-hidden", gen.n_irrelevant_hidden, "latents with at most one child")->capture_default_str()->check(CLI::NonNegativeNumber);
  generate->add_option("--edge-prob", gen.edge_prob, "edge probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  generate->add_option("--w-min", gen.w_min, "smallest |weight|")->capture_default_str();
  generate->add_option("--w-max", gen.w_max, "largest |weight|")->capture_default_str();
  generate->add_option("--var-min", gen.var_min, "smallest disturbance variance")->capture_default_str()->check(CLI::PositiveNumber);
  generate->add_option("--var-max", gen.var_max, "largest disturbance variance")->capture_default_str()->check(CLI::PositiveNumber);
  generate->add_option("--constant-range", gen.constant_range, "constants drawn from [-r, r]")->capture_default_str()->check(CLI::NonNegativeNumber);
  generate->add_option("--min-effect", gen.min_total_effect, "smallest |edge| and |total effect|")->capture_default_str()->check(CLI::NonNegativeNumber);
  generate->add_option("--max-retries", gen.max_retries, "generation attempts")->capture_default_str()->check(CLI::PositiveNumber);
  add_seed(generate, run, true);
  add_output(generate, run, "model JSON");
  bind(generate, [&] {
    run.seeded = true;
    const auto m = random_model(gen, Seed(run.seed));
    io::write_json(run.out, io::to_json(m));
    run.outputs = {run.out};
    return exit_ok;
  });

  // canonicalize -----------------------------------------------------------
  std::string model_in = "-";
  auto* canon_cmd = app.add_subcommand("canonicalize", "reduce a model to its canonical form");
  canon_cmd->add_option("model", model_in, "model JSON, '-' for stdin")->capture_default_str();
  add_output(canon_cmd, run, "canonical model JSON");
  bind(canon_cmd, [&] {
    const auto c = canonicalize(read_valid_model(model_in));
    io::write_json(run.out, io::to_json(c.model));
    run.inputs = {model_in};
    run.outputs = {run.out};
    return exit_ok;
  });

  // simulate ---------------------------------------------------------------
  long long n_samples = 1000;
  auto* sim = app.add_subcommand("simulate", "draw observed samples from a model");
  sim->add_option("model", model_in, "model JSON, '-' for stdin")->capture_default_str();
  sim->add_option("-n,--n", n_samples, "samples")->capture_default_str()->check(CLI::PositiveNumber);
  add_seed(sim, run, true);
  add_output(sim, run, "data CSV");
  bind(sim, [&] {
    run.seeded = true;
    const auto d = simulate(read_valid_model(model_in), static_cast<Eigen::Index>(n_samples), Seed(run.seed));
    io::write_text(run.out, io::to_csv(d));
    run.inputs = {model_in};
    run.outputs = {run.out};
    return exit_ok;
  });

  // mixing -----------------------------------------------------------------
  bool do_scramble = false;
  std::string pattern_out, means_out;
  auto* mix = app.add_subcommand("mixing", "observed mixing basis of the canonical form of a model");
  mix->add_option("model", model_in, "model JSON, '-' for stdin")->capture_default_str();
  mix->add_flag("--scramble", do_scramble, "permute rows and columns and flip column signs");
  mix->add_option("--pattern", pattern_out, "also write the exact zero pattern here");
  mix->add_option("--means", means_out, "also write observed means, in basis row order, here");
  add_seed(mix, run, false);
  add_output(mix, run, "basis JSON");
  bind(mix, [&] {
    const auto c = canonicalize(read_valid_model(model_in));
    auto basis = observed_basis(c);
    if (do_scramble) {
      run.seeded = true;
      basis = scramble(basis, Seed(run.seed));
    }
    io::write_json(run.out, io::to_json(basis));
    run.inputs = {model_in};
    run.outputs = {run.out};
    if (!pattern_out.empty()) {
      io::write_json(pattern_out, io::to_json(exact_zero_pattern(basis)));
      run.outputs.push_back(pattern_out);
    }
    if (!means_out.empty()) {
      io::write_json(means_out, io::means_to_json(means_in_row_order(basis, c.model)));
      run.outputs.push_back(means_out);
    }
    return exit_ok;
  });

  // enumerate --------------------------------------------------------------
  std::string basis_in = "-", pattern_in, means_in;
  double zero_tol = 0.0;
  EnumerateOptions enum_opt;
  auto* enumerate = app.add_subcommand("enumerate", "every canonical model compatible with a basis");
  enumerate->add_option("basis", basis_in, "basis JSON, '-' for stdin")->capture_default_str();
  enumerate->add_option("--pattern", pattern_in, "zero pattern JSON (default: entries with |a| <= --zero-tol)");
  enumerate->add_option("--zero-tol", zero_tol, "zero threshold when no pattern is given")->capture_default_str()->check(CLI::NonNegativeNumber);
  enumerate->add_option("--means", means_in, "means JSON in basis row order (default: zeros)");
  enumerate->add_option("--struct-tol", enum_opt.struct_tol, "structural zero threshold")->capture_default_str()->check(CLI::NonNegativeNumber);
  enumerate->add_option("--duplicate-tol", enum_opt.duplicate_tol, "tolerance for merging duplicates")->capture_default_str()->check(CLI::NonNegativeNumber);
  add_output(enumerate, run, "equivalence set JSON");
  bind(enumerate, [&] {
    const auto basis = io::basis_from_json(io::read_json(basis_in));
    run.inputs = {basis_in};
    ZeroPattern zero = exact_zero_pattern(basis, zero_tol);
    if (!pattern_in.empty()) {
      zero = io::pattern_from_json(io::read_json(pattern_in));
      run.inputs.push_back(pattern_in);
    }
    std::vector<double> means(basis.row_ids.size(), 0.0);
    if (!means_in.empty()) {
      means = io::means_from_json(io::read_json(means_in));
      run.inputs.push_back(means_in);
    }
    const auto set = enumerate_models(basis, zero, means, enum_opt);
    json out = io::to_json(set);
    out["provenance"] = {{"basis", basis_in},
                         {"pattern", pattern_in.empty() ? json("zero-tol " + io::format_double(zero_tol)) : json(pattern_in)},
                         {"means", means_in.empty() ? json(nullptr) : json(means_in)},
                         {"classifications", classification_count(static_cast<int>(basis.rows()),
                                                                   static_cast<int>(basis.cols() - basis.rows()))},
                         {"version", LVLINGAM_VERSION}};
    io::write_json(run.out, out);
    run.outputs = {run.out};
    return exit_ok;
  });

  // estimate-basis ---------------------------------------------------------
  std::string data_in = "-", sources_in;
  OicaConfig oica;
  bool fixed_noise = false;
  int bootstrap = 0;
  auto* est = app.add_subcommand("estimate-basis", "overcomplete ICA basis from data with known mixture sources");
  est->add_option("data", data_in, "data CSV, '-' for stdin")->capture_default_str();
  est->add_option("--sources", sources_in, "sources JSON")->required();
  est->add_option("--noise-var", oica.noise_var, "initial sensor noise variance (<= 0: automatic)")->capture_default_str();
  est->add_option("--noise-floor", oica.noise_floor, "smallest sensor noise variance")->capture_default_str()->check(CLI::PositiveNumber);
  est->add_flag("--fixed-noise", fixed_noise, "keep the sensor noise variance fixed");
  est->add_option("--max-iter", oica.max_iter, "EM iterations")->capture_default_str()->check(CLI::PositiveNumber);
  est->add_option("--tol", oica.tol, "per-sample log-likelihood gain that stops EM")->capture_default_str()->check(CLI::NonNegativeNumber);
  est->add_option("--restarts", oica.restarts, "random restarts")->capture_default_str()->check(CLI::PositiveNumber);
  est->add_option("--burn-in", oica.burn_in, "iterations per restart before selection")->capture_default_str()->check(CLI::PositiveNumber);
  est->add_option("--bootstrap", bootstrap, "also refit on this many resamples and emit the ensemble")->capture_default_str()->check(CLI::NonNegativeNumber);
  add_seed(est, run, false);
  add_output(est, run, "fit JSON");
  bind(est, [&] {
    run.seeded = true;
    oica.seed = run.seed;
    oica.learn_noise = !fixed_noise;
    const auto data = io::data_from_csv(io::read_text(data_in));
    const auto sources = io::sources_from_json(io::read_json(sources_in));
    run.inputs = {data_in, sources_in};
    json out;
    if (bootstrap > 0) {
      FitResult full;
      const auto ens = bootstrap_fit(data, sources, oica, bootstrap, &full);
      out = io::to_json(full);
      out["bases"] = io::to_json(ens)["bases"];
    } else {
      out = io::to_json(fit(data, sources, oica));
    }
    io::write_json(run.out, out);
    run.outputs = {run.out};
    return exit_ok;
  });

  // discover ---------------------------------------------------------------
  std::string ensemble_in = "-";
  DiscoverOptions disc;
  auto* discover_cmd = app.add_subcommand("discover", "pruned models from an ensemble of basis estimates");
  discover_cmd->add_option("ensemble", ensemble_in, "ensemble JSON ({\"bases\": [...]}), '-' for stdin")->capture_default_str();
  discover_cmd->add_option("--means", means_in, "means JSON in basis row order (default: zeros)");
  discover_cmd->add_option("--zero-z", disc.zero_z, "mean/sd threshold for nonzero basis entries")->capture_default_str()->check(CLI::NonNegativeNumber);
  discover_cmd->add_option("--effect-z", disc.effect_z, "mean/sd threshold for kept direct effects")->capture_default_str()->check(CLI::NonNegativeNumber);
  discover_cmd->add_option("--quorum", disc.quorum, "share of members a classification must exceed")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  add_output(discover_cmd, run, "discovery JSON");
  bind(discover_cmd, [&] {
    const auto ens = io::ensemble_from_json(io::read_json(ensemble_in));
    run.inputs = {ensemble_in};
    std::vector<double> means(ens.members.empty() ? 0 : ens.members[0].row_ids.size(), 0.0);
    if (!means_in.empty()) {
      means = io::means_from_json(io::read_json(means_in));
      run.inputs.push_back(means_in);
    }
    io::write_json(run.out, io::to_json(discover(ens, means, disc)));
    run.outputs = {run.out};
    return exit_ok;
  });

  // experiment1 ------------------------------------------------------------
  bool table = false;
  Experiment1Config e1;
  auto* exp1 = app.add_subcommand("experiment1", "exact bases: exactly one causally equivalent model per set");
  exp1->add_option("--trials", e1.trials, "random models")->capture_default_str()->check(CLI::PositiveNumber);
  exp1->add_option("--min-observed", e1.min_observed)->capture_default_str()->check(CLI::Range(2, 12));
  exp1->add_option("--max-observed", e1.max_observed)->capture_default_str()->check(CLI::Range(2, 12));
  exp1->add_option("--min-hidden", e1.min_hidden)->capture_default_str()->check(CLI::NonNegativeNumber);
  exp1->add_option("--max-hidden", e1.max_hidden)->capture_default_str()->check(CLI::NonNegativeNumber);
  exp1->add_option("--max-irrelevant-hidden", e1.max_irrelevant_hidden)->capture_default_str()->check(CLI::NonNegativeNumber);
  exp1->add_option("--tol", e1.tol, "coefficient tolerance for causal equivalence")->capture_default_str();
  exp1->add_flag("--table", table, "print a summary table to stderr");
  add_seed(exp1, run, false);
  add_output(exp1, run, "report JSON");
  bind(exp1, [&] {
    run.seeded = true;
    e1.seed = run.seed;
    const auto rep = run_experiment1(e1);
    io::write_json(run.out, io::to_json(rep));
    run.outputs = {run.out};
    if (table) {
      std::map<std::pair<int, int>, std::array<std::size_t, 3>> cells;
      for (const auto& t : rep.trials) {
        auto& c = cells[{t.n_observed, t.n_hidden}];
        ++c[0];
        c[1] += t.pass;
        c[2] = std::max(c[2], t.set_size);
      }
      std::cerr << table_line({"observed", "hidden", "trials", "passed", "max set"});
      for (const auto& [k, c] : cells)
        std::cerr << table_line({std::to_string(k.first), std::to_string(k.second), std::to_string(c[0]),
                                 std::to_string(c[1]), std::to_string(c[2])});
    }
    return rep.all_pass() ? exit_ok : exit_failed_check;
  });

  // experiment2 ------------------------------------------------------------
  Experiment2Config e2;
  auto* exp2 = app.add_subcommand("experiment2", "perturbed ensembles of exact bases");
  exp2->add_option("--sigma", e2.sigmas, "noise levels, relative to max|A|")->capture_default_str()->check(CLI::NonNegativeNumber);
  exp2->add_option("--k", e2.k, "ensemble size")->capture_default_str()->check(CLI::Range(2, 100000));
  exp2->add_option("--trials", e2.trials, "random models")->capture_default_str()->check(CLI::PositiveNumber);
  exp2->add_option("--close-tol", e2.close_tol, "largest observed-effect error counted as recovered")->capture_default_str();
  exp2->add_option("--min-observed", e2.min_observed)->capture_default_str()->check(CLI::Range(2, 12));
  exp2->add_option("--max-observed", e2.max_observed)->capture_default_str()->check(CLI::Range(2, 12));
  exp2->add_option("--n-hidden", e2.n_hidden)->capture_default_str()->check(CLI::NonNegativeNumber);
  exp2->add_option("--min-effect", e2.generation.min_total_effect, "smallest generated |edge| and |total effect|")->capture_default_str();
  exp2->add_option("--zero-z", e2.discover.zero_z)->capture_default_str();
  exp2->add_option("--effect-z", e2.discover.effect_z)->capture_default_str();
  exp2->add_option("--quorum", e2.discover.quorum)->capture_default_str();
  exp2->add_flag("--table", table, "print a summary table to stderr");
  add_seed(exp2, run, false);
  add_output(exp2, run, "report JSON");
  bind(exp2, [&] {
    run.seeded = true;
    e2.seed = run.seed;
    const auto rep = run_experiment2(e2);
    io::write_json(run.out, io::to_json(rep));
    run.outputs = {run.out};
    if (table) {
      std::cerr << table_line({"sigma", "trials", "recovered", "zeros ok", "errors"});
      for (const auto& l : rep.levels)
        std::cerr << table_line({io::format_double(l.sigma), std::to_string(l.trials), fixed(l.recovery_rate()),
                                 fixed(l.zero_recovery_rate()), std::to_string(l.errors)});
    }
    return exit_ok;
  });

  // experiment3 ------------------------------------------------------------
  Experiment3Config e3;
  std::string e3_model;
  long long e3_n = e3.n;
  auto* exp3 = app.add_subcommand("experiment3", "simulate, fit overcomplete bases, discover");
  exp3->add_option("--n", e3_n, "samples per run")->capture_default_str()->check(CLI::Range(2LL, 10000000LL));
  exp3->add_option("--seeds", e3.seeds, "independent runs")->capture_default_str()->check(CLI::PositiveNumber);
  exp3->add_option("--k", e3.k, "bootstrap resamples")->capture_default_str()->check(CLI::Range(2, 10000));
  exp3->add_option("--coef-tol", e3.coef_tol, "largest coefficient error counted as success")->capture_default_str();
  exp3->add_option("--restarts", e3.oica.restarts, "EM restarts for the full-data fit")->capture_default_str()->check(CLI::PositiveNumber);
  exp3->add_option("--model", e3_model, "canonical model JSON with gaussian-mixture disturbances (default: built-in)");
  exp3->add_flag("--table", table, "print a summary table to stderr");
  add_seed(exp3, run, false);
  add_output(exp3, run, "report JSON");
  bind(exp3, [&] {
    run.seeded = true;
    e3.seed = run.seed;
    e3.n = static_cast<Eigen::Index>(e3_n);
    CanonicalModel truth = experiment3_model();
    if (!e3_model.empty()) {
      truth = certify(read_valid_model(e3_model));
      run.inputs = {e3_model};
    }
    const auto rep = run_experiment3(e3, truth);
    io::write_json(run.out, io::to_json(rep));
    run.outputs = {run.out};
    if (table) {
      std::cerr << table_line({"seed", "zero acc", "structure", "max error", "success"});
      for (const auto& r : rep.runs)
        std::cerr << table_line({std::to_string(r.seed % 100000), fixed(r.zero_pattern_accuracy),
                                 r.structure_correct ? "correct" : "wrong",
                                 std::isfinite(r.max_coef_error) ? fixed(r.max_coef_error) : "-",
                                 r.success ? "yes" : "no"});
    }
    return exit_ok;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("invalid-flags", e.what());
    return exit_invalid;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    const int code = action();
    write_manifest(run, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return code;
  } catch (const CLI::RuntimeError& e) {
    return e.get_exit_code();
  } catch (const Error& e) {
    report_error(to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    report_error(to_string(ErrorCode::internal), e.what());
    return exit_operation;
  }
}
