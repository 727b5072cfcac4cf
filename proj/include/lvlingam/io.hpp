#pragma once

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <unistd.h>

#include "lvlingam/canonical.hpp"
#include "lvlingam/enumerate.hpp"
#include "lvlingam/estimate.hpp"
#include "lvlingam/experiments.hpp"
#include "lvlingam/mixing.hpp"
#include "lvlingam/model.hpp"
#include "lvlingam/oica.hpp"

namespace lvlingam::io {

using json = nlohmann::ordered_json;

namespace detail {

[[noreturn]] inline void schema(const std::string& what) { fail(ErrorCode::invalid_input, "schema: " + what); }

inline const json& field(const json& j, const char* key) {
  if (!j.is_object()) schema(std::string("expected an object holding '") + key + "'");
  const auto it = j.find(key);
  if (it == j.end()) schema(std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const json& j, const char* what) {
  if (!j.is_number()) schema(std::string(what) + " must be a number");
  return j.get<double>();
}

inline int integer(const json& j, const char* what) {
  if (!j.is_number_integer()) schema(std::string(what) + " must be an integer");
  return j.get<int>();
}

inline const json& array(const json& j, const char* what) {
  if (!j.is_array()) schema(std::string(what) + " must be an array");
  return j;
}

inline std::vector<double> numbers(const json& j, const char* what) {
  std::vector<double> out;
  for (const auto& v : array(j, what)) out.push_back(number(v, what));
  return out;
}

inline std::vector<int> integers(const json& j, const char* what) {
  std::vector<int> out;
  for (const auto& v : array(j, what)) out.push_back(integer(v, what));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrices

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
  detail::array(j, "matrix");
  const auto r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = r ? static_cast<Eigen::Index>(detail::array(j[0], "matrix row").size()) : cols_if_empty;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(detail::array(j[i], "matrix row").size()) != c) detail::schema("ragged matrix");
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = detail::number(j[i][k], "matrix entry");
  }
  return m;
}

inline json mask_to_json(const BoolMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(static_cast<bool>(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline BoolMatrix mask_from_json(const json& j) {
  detail::array(j, "mask");
  const auto r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = r ? static_cast<Eigen::Index>(detail::array(j[0], "mask row").size()) : 0;
  BoolMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(detail::array(j[i], "mask row").size()) != c) detail::schema("ragged mask");
    for (Eigen::Index k = 0; k < c; ++k) {
      if (!j[i][k].is_boolean()) detail::schema("mask entries must be booleans");
      m(i, k) = j[i][k].get<bool>();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Models

inline json to_json(const Disturbance& d) {
  json j = {{"family", std::string(to_string(d.family()))}, {"params", d.params()}};
  if (d.family() == Family::weighted_sum) {
    json terms = json::array();
    for (const auto& t : d.terms()) {
      json tj = to_json(t.dist);
      tj["coef"] = t.coef;
      terms.push_back(std::move(tj));
    }
    j["terms"] = std::move(terms);
  }
  return j;
}

inline Disturbance disturbance_from_json(const json& j) {
  const auto& fam = detail::field(j, "family");
  if (!fam.is_string()) detail::schema("family must be a string");
  const Family f = family_from_string(fam.get<std::string>());
  std::vector<double> params;
  if (j.contains("params")) params = detail::numbers(j["params"], "params");
  std::vector<Term> terms;
  if (f == Family::weighted_sum)
    for (const auto& t : detail::array(detail::field(j, "terms"), "terms"))
      terms.push_back({detail::number(detail::field(t, "coef"), "coef"), disturbance_from_json(t)});
  return Disturbance::from_parts(f, std::move(params), std::move(terms));
}

inline json to_json(const LvModel& m) {
  json vars = json::array(), edges = json::array(), dists = json::array();
  for (const auto& v : m.variables) vars.push_back({{"id", v.id}, {"observed", v.observed}, {"constant", v.constant}});
  for (const auto& e : m.edges) edges.push_back({{"from", e.from}, {"to", e.to}, {"weight", e.weight}});
  for (const auto& [id, d] : m.disturbances) {
    json dj = {{"id", id}};
    dj.update(to_json(d));
    dists.push_back(std::move(dj));
  }
  return {{"variables", vars}, {"edges", edges}, {"disturbances", dists}};
}

/// Parses a model. Only the schema is checked here; call validate() for
/// structural problems.
inline LvModel model_from_json(const json& j) {
  LvModel m;
  for (const auto& v : detail::array(detail::field(j, "variables"), "variables")) {
    const auto& obs = detail::field(v, "observed");
    if (!obs.is_boolean()) detail::schema("observed must be a boolean");
    const double c = v.contains("constant") ? detail::number(v["constant"], "constant") : 0.0;
    m.variables.push_back({detail::integer(detail::field(v, "id"), "id"), obs.get<bool>(), c});
  }
  if (j.contains("edges"))
    for (const auto& e : detail::array(j["edges"], "edges"))
      m.edges.push_back({detail::integer(detail::field(e, "from"), "from"), detail::integer(detail::field(e, "to"), "to"),
                         detail::number(detail::field(e, "weight"), "weight")});
  for (const auto& d : detail::array(detail::field(j, "disturbances"), "disturbances")) {
    const int id = detail::integer(detail::field(d, "id"), "id");
    if (!m.disturbances.emplace(id, disturbance_from_json(d)).second) detail::schema("duplicate disturbance id");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Bases, patterns, ensembles, means, sources

inline std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::hidden: return "hidden";
    case SourceKind::observed_disturbance: return "observed-disturbance";
    default: return "unknown";
  }
}

inline json to_json(const MixingBasis& b) {
  json j = {{"row_ids", b.row_ids}, {"matrix", matrix_to_json(b.matrix)}};
  if (!b.col_tags.empty()) {
    json tags = json::array();
    for (const auto& t : b.col_tags) tags.push_back({{"kind", std::string(to_string(t.kind))}, {"id", t.id}});
    j["columns"] = std::move(tags);
  }
  return j;
}

inline MixingBasis basis_from_json(const json& j) {
  MixingBasis b;
  b.row_ids = detail::integers(detail::field(j, "row_ids"), "row_ids");
  b.matrix = matrix_from_json(detail::field(j, "matrix"));
  if (b.matrix.rows() != static_cast<Eigen::Index>(b.row_ids.size()))
    detail::schema("matrix rows must match row_ids");
  if (j.contains("columns")) {
    for (const auto& t : detail::array(j["columns"], "columns")) {
      const auto& kind = detail::field(t, "kind");
      if (!kind.is_string()) detail::schema("column kind must be a string");
      const auto k = kind.get<std::string>();
      const SourceKind sk = k == "hidden"                 ? SourceKind::hidden
                            : k == "observed-disturbance" ? SourceKind::observed_disturbance
                            : k == "unknown"              ? SourceKind::unknown
                                                          : (detail::schema("unknown column kind"), SourceKind::unknown);
      b.col_tags.push_back({sk, detail::integer(detail::field(t, "id"), "column id")});
    }
    if (static_cast<Eigen::Index>(b.col_tags.size()) != b.cols()) detail::schema("one column tag per column");
  }
  return b;
}

inline json to_json(const ZeroPattern& z) { return {{"mask", mask_to_json(z.mask)}}; }

inline ZeroPattern pattern_from_json(const json& j) { return {mask_from_json(detail::field(j, "mask"))}; }

inline json to_json(const BasisEnsemble& e) {
  json bases = json::array();
  for (const auto& m : e.members) bases.push_back(to_json(m));
  return {{"bases", bases}};
}

inline BasisEnsemble ensemble_from_json(const json& j) {
  BasisEnsemble e;
  for (const auto& b : detail::array(detail::field(j, "bases"), "bases")) e.members.push_back(basis_from_json(b));
  return e;
}

inline json means_to_json(const std::vector<double>& means) { return {{"means", means}}; }

inline std::vector<double> means_from_json(const json& j) { return detail::numbers(detail::field(j, "means"), "means"); }

inline json to_json(const std::vector<MogSource>& sources) {
  json arr = json::array();
  for (const auto& s : sources)
    arr.push_back({{"weights", s.weights}, {"means", s.means}, {"variances", s.variances}});
  return {{"sources", arr}};
}

/// Sources are standardized on read.
inline std::vector<MogSource> sources_from_json(const json& j) {
  std::vector<MogSource> out;
  for (const auto& s : detail::array(detail::field(j, "sources"), "sources"))
    out.push_back(MogSource::standardized(detail::numbers(detail::field(s, "weights"), "weights"),
                                          detail::numbers(detail::field(s, "means"), "means"),
                                          detail::numbers(detail::field(s, "variances"), "variances")));
  return out;
}

// ---------------------------------------------------------------------------
// Results

inline json to_json(const EquivalenceSet& set) {
  json models = json::array();
  for (const auto& e : set.members)
    models.push_back({{"hidden_columns", e.hidden_columns},
                      {"column_variable", e.column_variable},
                      {"canonical", e.model.certified},
                      {"model", to_json(e.model.model)}});
  return {{"models", models}};
}

inline json to_json(const DiscoveryResult& r) {
  json structures = json::array();
  for (const auto& s : r.structures)
    structures.push_back({{"hidden_columns", s.hidden_columns},
                          {"support", s.support},
                          {"variable_ids", s.variable_ids},
                          {"hidden_ids", s.hidden_ids},
                          {"mean_effects", matrix_to_json(s.mean_effects)},
                          {"sd_effects", matrix_to_json(s.sd_effects)},
                          {"structure", mask_to_json(s.structure)},
                          {"hidden_weights", matrix_to_json(s.hidden_weights)},
                          {"canonical", s.model.certified},
                          {"model", to_json(s.model.model)}});
  return {{"members", r.members},
          {"ambiguous_alignments", r.ambiguous_alignments},
          {"zeros", to_json(r.zeros)},
          {"structures", structures}};
}

inline json to_json(const FitResult& f) {
  return {{"basis", to_json(f.basis)}, {"means", f.means},       {"loglik", f.loglik},
          {"noise_var", f.noise_var},  {"iterations", f.iterations}, {"converged", f.converged},
          {"restart", f.restart}};
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const Experiment1Report& r) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    json tj = {{"n_observed", t.n_observed},         {"n_hidden", t.n_hidden},
               {"set_size", t.set_size},             {"causal_matches", t.causal_matches},
               {"observational_matches", t.observational_matches}, {"pass", t.pass}};
    if (!t.error.empty()) tj["error"] = t.error;
    trials.push_back(std::move(tj));
  }
  return {{"trials", r.trials.size()}, {"passed", r.passed}, {"pass_rate", r.pass_rate()}, {"results", trials}};
}

inline json to_json(const Experiment2Report& r) {
  json levels = json::array(), trials = json::array();
  for (const auto& l : r.levels)
    levels.push_back({{"sigma", l.sigma},
                      {"trials", l.trials},
                      {"recovered", l.recovered},
                      {"recovery_rate", l.recovery_rate()},
                      {"zero_recovery_rate", l.zero_recovery_rate()},
                      {"errors", l.errors}});
  for (const auto& t : r.trials) {
    json tj = {{"sigma", t.sigma},
               {"n_observed", t.n_observed},
               {"zeros_recovered", t.zeros_recovered},
               {"structures", t.structures},
               {"best_distance", finite_or_null(t.best_distance)},
               {"recovered", t.recovered}};
    if (!t.error.empty()) tj["error"] = t.error;
    trials.push_back(std::move(tj));
  }
  return {{"levels", levels}, {"results", trials}};
}

inline json to_json(const Experiment3Report& r) {
  json runs = json::array();
  for (const auto& x : r.runs) {
    json rj = {{"seed", x.seed},
               {"loglik", finite_or_null(x.loglik)},
               {"noise_var", x.noise_var},
               {"converged", x.converged},
               {"members", x.members},
               {"zero_pattern_accuracy", x.zero_pattern_accuracy},
               {"structures", x.structures},
               {"chosen_support", x.chosen_support},
               {"structure_correct", x.structure_correct},
               {"max_coef_error", finite_or_null(x.max_coef_error)},
               {"success", x.success},
               {"notes", x.notes}};
    if (!x.error.empty()) rj["error"] = x.error;
    runs.push_back(std::move(rj));
  }
  return {{"runs", r.runs.size()}, {"successes", r.successes}, {"majority", r.majority()}, {"results", runs}};
}

// ---------------------------------------------------------------------------
// CSV data

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string to_csv(const DataMatrix& d) {
  std::string out;
  for (std::size_t j = 0; j < d.columns.size(); ++j) out += (j ? "," : "") + std::to_string(d.columns[j]);
  out += '\n';
  for (Eigen::Index i = 0; i < d.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.values.cols(); ++j) {
      if (j) out += ',';
      out += format_double(d.values(i, j));
    }
    out += '\n';
  }
  return out;
}

inline DataMatrix data_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  const auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };
  if (!std::getline(in, line)) detail::schema("empty CSV");
  DataMatrix d;
  for (const auto& c : split(line)) {
    int id = 0;
    const auto r = std::from_chars(c.data(), c.data() + c.size(), id);
    if (r.ec != std::errc{} || r.ptr != c.data() + c.size()) detail::schema("CSV header must hold integer ids");
    d.columns.push_back(id);
  }
  std::vector<double> vals;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != d.columns.size()) detail::schema("CSV row " + std::to_string(rows + 2) + " has the wrong width");
    for (const auto& c : cells) {
      double v = 0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (r.ec != std::errc{} || r.ptr != c.data() + c.size()) detail::schema("CSV cell '" + c + "' is not a number");
      vals.push_back(v);
    }
    ++rows;
  }
  d.values.resize(rows, static_cast<Eigen::Index>(d.columns.size()));
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < d.values.cols(); ++j) d.values(i, j) = vals[i * d.values.cols() + j];
  return d;
}

// ---------------------------------------------------------------------------
// Files; "-" means stdin or stdout.

inline std::string read_text(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::invalid_input, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::invalid_input, "'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
inline void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text << std::flush;
    return;
  }
  const std::filesystem::path target(path);
  auto tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::invalid_input, "cannot write '" + path + "'");
    out << text;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail(ErrorCode::invalid_input, "short write to '" + path + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::invalid_input, "cannot move output into '" + path + "'");
  }
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace lvlingam::io
