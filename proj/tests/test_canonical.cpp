#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "lvlingam/canonical.hpp"
#include "lvlingam/generate.hpp"

using namespace lvlingam;
using Catch::Approx;

namespace {

bool has_kind(const CanonicalCheck& c, const std::string& kind) {
  return std::any_of(c.violations.begin(), c.violations.end(),
                     [&](const Violation& v) { return v.kind == kind; });
}

// h -> x (4); h' -> {x, y} (2, 2); h'' -> {x, y} (3, 3)
LvModel absorb_and_merge_model() {
  LvModel m;
  m.variables = {{0, true, 0.5}, {1, true, -1.0}, {10, false, 0.0}, {11, false, 0.0}, {12, false, 0.0}};
  m.edges = {{10, 0, 4.0}, {11, 0, 2.0}, {11, 1, 2.0}, {12, 0, 3.0}, {12, 1, 3.0}};
  m.disturbances = {{0, Disturbance::laplace(0.7)},
                    {1, Disturbance::uniform(1.2)},
                    {10, bimodal_mixture(0.3, 0.7, 1.0)},
                    {11, Disturbance::laplace(std::sqrt(0.5))},
                    {12, bimodal_mixture(0.2, 0.6, 1.0)}};
  m.normalize();
  return m;
}

}  // namespace

TEST_CASE("canonicalize leaves fully observed models alone", "[canonical]") {
  auto m = fixtures::chain({0, 1, 2}, 0.8);
  m.variables[1].constant = 2.0;
  const auto c = canonicalize(m);
  CHECK(c.certified);
  CHECK(c.model == m);
}

TEST_CASE("canonicalize the eight-variable example", "[canonical]") {
  const auto m = fixtures::eight_variable_model();
  const auto c = canonicalize(m);
  REQUIRE(c.certified);
  CHECK(c.model.hidden_ids() == std::vector<VariableId>{4});
  CHECK(c.model.find(6) == nullptr);
  CHECK(c.model.find(7) == nullptr);
  CHECK(c.model.weight(2, 8) == 6.0);
  CHECK(c.model.weight(4, 8) == 12.0);
  CHECK(c.model.parents(8) == std::vector<VariableId>{2, 4});
  CHECK(c.model.disturbances.at(8).variance() == Approx(10.0));
  CHECK(c.model == fixtures::eight_variable_reduced());
  CHECK((fixtures::observed_total_effects(m) - fixtures::observed_total_effects(c.model)).cwiseAbs().maxCoeff() < 1e-9);

  const CanonicalModel reduced{fixtures::eight_variable_reduced(), true};
  CHECK(observationally_equivalent(c, reduced, 1e-9));
  CHECK(causally_equivalent(c, reduced, 1e-9));
}

TEST_CASE("absorb a single-child latent and merge proportional latents", "[canonical]") {
  const auto m = absorb_and_merge_model();
  const auto c = canonicalize(m);
  REQUIRE(c.certified);
  REQUIRE(c.model.hidden_ids() == std::vector<VariableId>{11});
  // merged latent 2 h' + 3 h'' has variance 13, so both weights become sqrt(13)
  CHECK(c.model.weight(11, 0) == Approx(std::sqrt(13.0)));
  CHECK(c.model.weight(11, 1) == Approx(std::sqrt(13.0)));
  CHECK(c.model.disturbances.at(0).variance() == Approx(m.disturbances.at(0).variance() + 16.0));
  CHECK((fixtures::observed_covariance(m) - fixtures::observed_covariance(c.model)).cwiseAbs().maxCoeff() < 1e-9);

  // Sampled covariance and third cumulants agree before and after.
  const Eigen::Index n = 1000000;
  const auto before = simulate(m, n, Seed(31));
  const auto after = simulate(c.model, n, Seed(32));
  auto centered = [](const DataMatrix& d) -> Eigen::MatrixXd {
    return d.values.rowwise() - d.values.colwise().mean();
  };
  const Eigen::MatrixXd xb = centered(before), xa = centered(after);
  auto compare = [&](const Eigen::ArrayXd& pb, const Eigen::ArrayXd& pa) {
    const double mb = pb.mean(), ma = pa.mean();
    const double se = std::sqrt(((pb - mb).square().mean() + (pa - ma).square().mean()) / n);
    CAPTURE(mb, ma, se);
    CHECK(std::abs(mb - ma) < 5 * se);
  };
  for (int i = 0; i < 2; ++i)
    for (int j = i; j < 2; ++j) {
      compare(xb.col(i).array() * xb.col(j).array(), xa.col(i).array() * xa.col(j).array());
      for (int k = j; k < 2; ++k)
        compare(xb.col(i).array() * xb.col(j).array() * xb.col(k).array(),
                xa.col(i).array() * xa.col(j).array() * xa.col(k).array());
    }
  CHECK(std::abs(before.values.col(0).mean() - after.values.col(0).mean()) < 0.02);
}

TEST_CASE("is_canonical names the violated clause", "[canonical]") {
  auto m = fixtures::chain({0, 1, 2}, 0.8);
  m.variables.push_back({5, false, 0.0});
  m.disturbances.emplace(5, Disturbance::uniform(std::sqrt(3.0)));
  m.edges.push_back({5, 0, 1.0});
  m.normalize();
  auto check = is_canonical(m);
  CHECK_FALSE(check.canonical);
  CHECK(has_kind(check, "latent-few-children"));

  LvModel p;
  p.variables = {{0, true, 0}, {1, true, 0}, {2, false, 0}, {3, false, 0}};
  for (VariableId id : {0, 1, 2, 3}) p.disturbances.emplace(id, Disturbance::uniform(std::sqrt(3.0)));
  p.edges = {{2, 0, 1.0}, {2, 1, 2.0}, {3, 0, 2.0}, {3, 1, 4.0}};
  p.normalize();
  check = is_canonical(p);
  CHECK_FALSE(check.canonical);
  CHECK(has_kind(check, "latent-proportional"));

  p.edges.back().weight = 4.5;
  CHECK(is_canonical(p).canonical);
  p.variables[2].constant = 1.0;
  CHECK(has_kind(is_canonical(p), "latent-not-standardized"));
}

TEST_CASE("equivalence predicates", "[canonical]") {
  const auto c = canonicalize(fixtures::eight_variable_model());
  CHECK(observationally_equivalent(c, c, 1e-9));
  CHECK(causally_equivalent(c, c, 1e-9));

  SECTION("relabelled latent") {
    auto r = c;
    for (auto& v : r.model.variables)
      if (v.id == 4) v.id = 40;
    for (auto& e : r.model.edges)
      if (e.from == 4) e.from = 40;
    auto node = r.model.disturbances.extract(4);
    node.key() = 40;
    r.model.disturbances.insert(std::move(node));
    r.model.normalize();
    CHECK(observationally_equivalent(c, r, 1e-9));
    CHECK(causally_equivalent(c, r, 1e-9));
  }
  SECTION("sign flip of a symmetric latent") {
    auto r = c;
    for (auto& e : r.model.edges)
      if (e.from == 4) e.weight = -e.weight;
    CHECK(observationally_equivalent(c, r, 1e-9));
    CHECK(causally_equivalent(c, r, 1e-9));
  }
  SECTION("sign flip of an asymmetric latent changes the distribution") {
    auto r = c;
    r.model.disturbances[4] = bimodal_mixture(0.2, 0.7, 1.0);
    auto flipped = r;
    for (auto& e : flipped.model.edges)
      if (e.from == 4) e.weight = -e.weight;
    CHECK_FALSE(observationally_equivalent(r, flipped, 1e-9));
    CHECK(causally_equivalent(r, flipped, 1e-9));
  }
  SECTION("moved observed edge") {
    const double tol = 1e-6;
    auto r = c;
    for (auto& e : r.model.edges)
      if (e.from == 1 && e.to == 3) e.weight += 2 * tol;
    CHECK_FALSE(causally_equivalent(c, r, tol));
    CHECK_FALSE(observationally_equivalent(c, r, tol));
  }
}

TEST_CASE("canonicalize properties over random models", "[canonical][property]") {
  for (int trial = 0; trial < 150; ++trial) {
    CAPTURE(trial);
    auto eng = Seed(77).split(trial).engine();
    GenerationConfig cfg;
    cfg.n_observed = std::uniform_int_distribution<int>(2, 6)(eng);
    cfg.n_hidden = std::uniform_int_distribution<int>(0, 2)(eng);
    cfg.n_irrelevant_hidden = std::uniform_int_distribution<int>(0, 3)(eng);
    cfg.edge_prob = 0.6;
    const auto m = random_model(cfg, Seed(1000 + trial));
    const auto c = canonicalize(m);
    REQUIRE(c.certified);
    CHECK(is_canonical(c.model).canonical);
    CHECK(c.model.hidden_ids().size() <= m.hidden_ids().size());

    // idempotent
    const auto cc = canonicalize(c.model);
    CHECK(cc.model.ids() == c.model.ids());
    REQUIRE(cc.model.edges.size() == c.model.edges.size());
    for (std::size_t k = 0; k < c.model.edges.size(); ++k) {
      CHECK(cc.model.edges[k].from == c.model.edges[k].from);
      CHECK(cc.model.edges[k].to == c.model.edges[k].to);
      CHECK(std::abs(cc.model.edges[k].weight - c.model.edges[k].weight) <= 1e-12);
    }
    CHECK(cc.model.disturbances == c.model.disturbances);

    CHECK((fixtures::observed_total_effects(m) - fixtures::observed_total_effects(c.model)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fixtures::observed_covariance(m) - fixtures::observed_covariance(c.model)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((observed_means(m) - observed_means(c.model)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(observationally_equivalent(c, canonicalize(m), 1e-12));
  }
}
