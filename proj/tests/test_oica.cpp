#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "lvlingam/oica.hpp"
#include "oica_fixtures.hpp"

using namespace lvlingam;
using Catch::Approx;
using fixtures::basis_of;
using fixtures::bimodal;
using fixtures::skewed;
using fixtures::draw;
using fixtures::nondecreasing;

TEST_CASE("mixture sources are standardized", "[oica]") {
  const auto m = MogSource::standardized({2, 6}, {3, 5}, {1, 2});
  CHECK(m.weights[0] + m.weights[1] == Approx(1.0));
  double mean = 0, var = 0;
  for (std::size_t c = 0; c < 2; ++c) mean += m.weights[c] * m.means[c];
  for (std::size_t c = 0; c < 2; ++c) var += m.weights[c] * (m.means[c] * m.means[c] + m.variances[c]);
  CHECK(mean == Approx(0.0).margin(1e-14));
  CHECK(var == Approx(1.0));
  CHECK_FALSE(m.is_gaussian());
  CHECK_FALSE(m.symmetric());
  CHECK(bimodal().symmetric());
  CHECK(MogSource::standardized({1}, {4}, {9}).is_gaussian());
  CHECK_THROWS_AS(MogSource::standardized({1, -1}, {0, 1}, {1, 1}), Error);
  CHECK_THROWS_AS(MogSource::standardized({}, {}, {}), Error);
  CHECK_THROWS_AS(MogSource::from_disturbance(Disturbance::laplace(1)), Error);
  const auto d = MogSource::from_disturbance(bimodal_mixture(0.5, 0.8, 3.0));
  CHECK(d.symmetric());
}

TEST_CASE("loglik of one standard gaussian source", "[oica]") {
  const std::vector<MogSource> src = {MogSource::standardized({1}, {0}, {1})};
  DataMatrix data{{0}, Eigen::MatrixXd(5, 1)};
  data.values << -1.5, 0.0, 0.3, 2.0, -0.7;
  double want = 0;
  for (Eigen::Index i = 0; i < 5; ++i)
    want += -0.5 * std::log(2 * std::numbers::pi) - 0.5 * data.values(i, 0) * data.values(i, 0);
  CHECK(loglik(basis_of(Eigen::MatrixXd::Ones(1, 1)), src, data, 1e-12) == Approx(want).epsilon(1e-10));
}

TEST_CASE("loglik is invariant to permuting sources with columns", "[oica]") {
  Eigen::MatrixXd a(2, 3);
  a << 1.0, 0.4, -0.6, 0.2, 1.1, 0.9;
  const std::vector<MogSource> src = {bimodal(), skewed(), MogSource::standardized({0.2, 0.8}, {0, 0}, {4, 1})};
  const auto data = draw(a, src, 200, 0.1, 3);
  const double base = loglik(basis_of(a), src, data, 0.01);
  const std::vector<int> perm = {2, 0, 1};
  Eigen::MatrixXd ap(2, 3);
  std::vector<MogSource> sp;
  for (int j = 0; j < 3; ++j) {
    ap.col(j) = a.col(perm[j]);
    sp.push_back(src[perm[j]]);
  }
  CHECK(loglik(basis_of(ap), sp, data, 0.01) == Approx(base).epsilon(1e-12));
}

TEST_CASE("loglik matches quadrature over source space", "[oica][oracle]") {
  CHECK(fixtures::quadrature_worst_error() < 1e-6);
}

TEST_CASE("configuration budget", "[oica]") {
  const std::vector<MogSource> src(11, bimodal());
  CHECK_THROWS_AS(loglik(basis_of(Eigen::MatrixXd::Ones(2, 11)), src,
                         DataMatrix{{0, 1}, Eigen::MatrixXd::Zero(3, 2)}, 0.1),
                  Error);
  const std::vector<MogSource> ten(10, bimodal());
  CHECK(std::isfinite(loglik(basis_of(Eigen::MatrixXd::Ones(2, 10)), ten,
                             DataMatrix{{0, 1}, Eigen::MatrixXd::Zero(3, 2)}, 0.1)));
}

TEST_CASE("scalar mixing coefficient", "[oica]") {
  const std::vector<MogSource> src = {bimodal()};
  const auto data = draw(Eigen::MatrixXd::Constant(1, 1, 2.0), src, 5000, 0.0, 5);
  OicaConfig cfg;
  cfg.restarts = 3;
  cfg.tol = 1e-12;
  cfg.max_iter = 50000;
  const auto r = fit(data, src, cfg);
  const double a_hat = std::abs(r.basis.matrix(0, 0));
  CHECK(a_hat >= 1.9);
  CHECK(a_hat <= 2.1);
  CHECK(nondecreasing(r.trace));

  // grid-search oracle at the fitted noise level
  const Eigen::MatrixXd centered = data.values.rowwise() - data.values.colwise().mean();
  const DataMatrix c{data.columns, centered};
  double best_a = 0, best_ll = -std::numeric_limits<double>::infinity();
  for (double g = 1.5; g <= 2.5; g += 0.001) {
    const double ll = loglik(basis_of(Eigen::MatrixXd::Constant(1, 1, g)), src, c, r.noise_var);
    if (ll > best_ll) best_ll = ll, best_a = g;
  }
  CHECK(a_hat == Approx(best_a).margin(0.002));
}

TEST_CASE("EM never decreases the likelihood", "[oica][property]") {
  Eigen::MatrixXd a(3, 4);
  a << 1.0, 0.0, 0.0, 0.9, 0.8, 1.0, 0.0, -0.7, 0.0, 0.5, 1.0, 0.3;
  const std::vector<MogSource> src(4, bimodal());
  const auto data = draw(a, src, 5000, 0.0, 8);
  OicaConfig cfg;
  cfg.noise_var = 1e-4;
  cfg.restarts = 1;
  cfg.max_iter = 200;
  const auto r = fit(data, src, cfg, basis_of(a));
  REQUIRE(r.trace.size() >= 2);
  CHECK(nondecreasing(r.trace));
  CHECK(r.loglik >= r.trace.front());

  for (int trial = 0; trial < 20; ++trial) {
    auto eng = Seed(trial).engine();
    Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(2, 3, [&] { return standard_normal(eng); });
    const std::vector<MogSource> s3 = {bimodal(0.7), skewed(), bimodal(0.9)};
    const auto d = draw(b, s3, 300, 0.05, 100 + trial);
    OicaConfig c;
    c.restarts = 2;
    c.burn_in = 20;
    c.max_iter = 60;
    c.seed = trial;
    CHECK(nondecreasing(fit(d, s3, c).trace));
  }
}

TEST_CASE("fits from different seeds agree up to permutation and sign", "[oica]") {
  Eigen::MatrixXd a(2, 3);
  a << 1.0, 0.0, 0.8, 0.6, 1.0, -0.7;
  const std::vector<MogSource> src(3, bimodal());
  const auto data = draw(a, src, 5000, 0.0, 21);
  OicaConfig c1, c2;
  c1.restarts = c2.restarts = 5;
  c1.seed = 1;
  c2.seed = 2;
  const auto r1 = fit(data, src, c1), r2 = fit(data, src, c2);
  const auto al = align_columns(r1.basis, r2.basis);
  CHECK(al.total_similarity / 3 >= 0.99);
  const auto truth = align_columns(basis_of(a), r1.basis);
  CHECK(truth.total_similarity / 3 >= 0.99);
}

TEST_CASE("fitted covariance matches the sample covariance", "[oica]") {
  Eigen::MatrixXd a(2, 3);
  a << 1.0, 0.3, 0.8, -0.4, 1.0, 0.6;
  const std::vector<MogSource> src = {bimodal(), skewed(), bimodal(0.7)};
  const auto data = draw(a, src, 5000, 0.1, 31);
  OicaConfig cfg;
  cfg.restarts = 4;
  const auto r = fit(data, src, cfg);
  const Eigen::MatrixXd x = data.values.rowwise() - data.values.colwise().mean();
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd sample = x.transpose() * x / n;
  Eigen::MatrixXd model = r.basis.matrix * r.basis.matrix.transpose();
  model.diagonal().array() += r.noise_var;
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double m4 = (x.col(i).array().square() * x.col(j).array().square()).mean();
      const double se = std::sqrt((m4 - sample(i, j) * sample(i, j)) / n);
      CHECK(std::abs(model(i, j) - sample(i, j)) <= 5 * se);
    }
  CHECK(r.means.size() == 2);
  CHECK(r.means(0) == Approx(data.values.col(0).mean()));
}

TEST_CASE("bootstrap ensembles", "[oica]") {
  Eigen::MatrixXd a(2, 3);
  a << 1.0, 0.0, 0.8, 0.6, 1.0, -0.7;
  const std::vector<MogSource> src(3, bimodal());
  OicaConfig cfg;
  cfg.restarts = 4;

  SECTION("shape contract") {
    const auto data = draw(a, src, 400, 0.0, 41);
    FitResult full;
    const auto e = bootstrap_fit(data, src, cfg, 2, &full);
    REQUIRE(e.members.size() == 2);
    for (const auto& m : e.members) {
      CHECK(m.row_ids == data.columns);
      CHECK(m.rows() == 2);
      CHECK(m.cols() == 3);
    }
    CHECK(std::isfinite(full.loglik));
    CHECK_THROWS_AS(bootstrap_fit(data, src, cfg, 1), Error);
  }
  SECTION("refitting the original rows keeps the column order") {
    const auto data = draw(a, src, 1000, 0.0, 42);
    const auto full = fit(data, src, cfg);
    OicaConfig one = cfg;
    one.restarts = 1;
    const auto again = fit(data, src, one, full.basis);
    const auto al = align_columns(full.basis, again.basis);
    CHECK(al.permutation == std::vector<int>{0, 1, 2});
    CHECK(al.signs == std::vector<int>{1, 1, 1});
  }
  SECTION("spread shrinks with more data") {
    const auto spread = [&](Eigen::Index n) {
      const auto e = bootstrap_fit(draw(a, src, n, 0.0, 43), src, cfg, 8);
      Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, 3), sq = Eigen::MatrixXd::Zero(2, 3);
      for (const auto& m : e.members) {
        mean += m.matrix;
        sq += m.matrix.cwiseAbs2();
      }
      const double k = static_cast<double>(e.members.size());
      mean /= k;
      return ((sq / k - mean.cwiseAbs2()) * k / (k - 1)).cwiseMax(0.0).cwiseSqrt().mean();
    };
    CHECK(spread(10000) < spread(1000));
  }
}
