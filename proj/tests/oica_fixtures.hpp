#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "lvlingam/oica.hpp"

namespace fixtures {

using namespace lvlingam;

inline MogSource bimodal(double sep = 0.85) { return MogSource::standardized({0.5, 0.5}, {-sep, sep}, {1 - sep * sep, 1 - sep * sep}); }
inline MogSource skewed() { return MogSource::standardized({0.3, 0.7}, {1.2, -0.4}, {0.5, 0.8}); }

// Data from x = A s + noise with the given mixture sources.
inline DataMatrix draw(const Eigen::MatrixXd& a, const std::vector<MogSource>& src, Eigen::Index n, double noise_sd,
                std::uint64_t seed) {
  auto eng = Seed(seed).engine();
  DataMatrix out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) out.columns.push_back(static_cast<VariableId>(i));
  out.values.resize(n, a.rows());
  Eigen::VectorXd s(a.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      std::discrete_distribution<std::size_t> pick(src[j].weights.begin(), src[j].weights.end());
      const auto c = pick(eng);
      s(j) = src[j].means[c] + std::sqrt(src[j].variances[c]) * standard_normal(eng);
    }
    out.values.row(r) = (a * s).transpose();
    for (Eigen::Index i = 0; i < a.rows(); ++i) out.values(r, i) += noise_sd * standard_normal(eng);
  }
  return out;
}

inline MixingBasis basis_of(const Eigen::MatrixXd& a) {
  MixingBasis b;
  for (Eigen::Index i = 0; i < a.rows(); ++i) b.row_ids.push_back(static_cast<VariableId>(i));
  b.matrix = a;
  return b;
}

inline double mog_density(const MogSource& m, double s) {
  double p = 0;
  for (std::size_t c = 0; c < m.components(); ++c)
    p += m.weights[c] * std::exp(-0.5 * (s - m.means[c]) * (s - m.means[c]) / m.variances[c]) /
         std::sqrt(2 * std::numbers::pi * m.variances[c]);
  return p;
}

// Trapezoid rule over a grid in source space.
inline double quadrature_density(const Eigen::MatrixXd& a, const std::vector<MogSource>& src,
                          const Eigen::Vector2d& x, double noise_var) {
  const double lo = -7, hi = 7, h = 0.1;
  const int m = static_cast<int>(std::lround((hi - lo) / h)) + 1;
  std::vector<std::vector<double>> p(3, std::vector<double>(m));
  for (int j = 0; j < 3; ++j)
    for (int g = 0; g < m; ++g) p[j][g] = mog_density(src[j], lo + g * h);
  const double norm = 1.0 / (2 * std::numbers::pi * noise_var);
  double total = 0;
  for (int g0 = 0; g0 < m; ++g0) {
    const double s0 = lo + g0 * h;
    for (int g1 = 0; g1 < m; ++g1) {
      const double s1 = lo + g1 * h;
      const double w01 = p[0][g0] * p[1][g1];
      const double r0 = x(0) - a(0, 0) * s0 - a(0, 1) * s1;
      const double r1 = x(1) - a(1, 0) * s0 - a(1, 1) * s1;
      for (int g2 = 0; g2 < m; ++g2) {
        const double s2 = lo + g2 * h;
        const double e0 = r0 - a(0, 2) * s2, e1 = r1 - a(1, 2) * s2;
        total += w01 * p[2][g2] * std::exp(-0.5 * (e0 * e0 + e1 * e1) / noise_var);
      }
    }
  }
  return total * norm * h * h * h;
}

// Log-likelihood trace never drops by more than a relative 1e-8.
inline bool nondecreasing(const std::vector<double>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] < trace[i - 1] - 1e-8 * std::max(1.0, std::abs(trace[i - 1]))) return false;
  return true;
}

// Largest per-sample gap between the exact log-likelihood and quadrature,
// for two observed variables and three mixture sources.
inline double quadrature_worst_error() {
  Eigen::MatrixXd a(2, 3);
  a << 1.0, 0.5, -0.7, 0.3, 1.2, 0.8;
  const std::vector<MogSource> src = {bimodal(0.8), skewed(), MogSource::standardized({0.4, 0.6}, {-1, 0.5}, {0.6, 0.9})};
  const double noise = 0.25;
  const auto data = draw(a, src, 50, std::sqrt(noise), 17);
  const auto per = sample_logliks(basis_of(a), src, data.values, noise);
  double worst = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    worst = std::max(worst, std::abs(per(i) - std::log(quadrature_density(a, src, data.values.row(i).transpose(), noise))));
  return worst;
}

}  // namespace fixtures
