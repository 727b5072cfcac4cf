#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lvlingam/error.hpp"
#include "lvlingam/rng.hpp"

namespace lvlingam {

enum class Family {
  laplace,               // params: [scale b]
  uniform,               // params: [half-width a], support [-a, a]
  generalized_gaussian,  // params: [shape beta, scale alpha]
  gaussian_mixture,      // params: [w1, m1, v1, w2, m2, v2, ...]
  weighted_sum,          // terms: coefficient * independent component
  unknown,               // params: [variance]; shape not identified
};

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::laplace: return "laplace";
    case Family::uniform: return "uniform";
    case Family::generalized_gaussian: return "generalized-gaussian";
    case Family::gaussian_mixture: return "gaussian-mixture";
    case Family::weighted_sum: return "weighted-sum";
    case Family::unknown: return "unknown";
  }
  return "?";
}

inline Family family_from_string(std::string_view s) {
  for (auto f : {Family::laplace, Family::uniform, Family::generalized_gaussian,
                 Family::gaussian_mixture, Family::weighted_sum, Family::unknown})
    if (to_string(f) == s) return f;
  fail(ErrorCode::invalid_input, "unknown disturbance family '" + std::string(s) + "'");
}

/// Second to fourth cumulants. Unknown shapes carry NaN in k3/k4.
struct Cumulants {
  double k2 = 0;
  double k3 = 0;
  double k4 = 0;

  double skewness() const { return k3 / std::pow(k2, 1.5); }
  double excess_kurtosis() const { return k4 / (k2 * k2); }
};

struct Term;

/// Zero-mean disturbance distribution. A weighted_sum keeps its independent
/// components so merged and absorbed disturbances can still be sampled
/// exactly.
class Disturbance {
 public:
  Disturbance() : Disturbance(Family::unknown, {1.0}) {}

  static Disturbance laplace(double scale) { return {Family::laplace, {scale}}; }
  static Disturbance uniform(double half_width) { return {Family::uniform, {half_width}}; }
  static Disturbance generalized_gaussian(double shape, double scale) {
    return {Family::generalized_gaussian, {shape, scale}};
  }
  static Disturbance gaussian_mixture(const std::vector<double>& weights,
                                      const std::vector<double>& means,
                                      const std::vector<double>& variances);
  static Disturbance unknown(double variance) { return {Family::unknown, {variance}}; }
  static Disturbance weighted_sum(std::vector<Term> terms);
  static Disturbance from_parts(Family family, std::vector<double> params,
                                std::vector<Term> terms = {});

  Family family() const noexcept { return family_; }
  const std::vector<double>& params() const noexcept { return params_; }
  const std::vector<Term>& terms() const noexcept { return terms_; }

  double variance() const;
  Cumulants cumulants() const;
  bool symmetric() const;
  bool is_gaussian() const;
  bool shape_known() const;

  /// Empty when parameters are admissible.
  std::vector<std::string> problems() const;

  double sample(Engine& eng) const;

  /// Distribution of c * e.
  Disturbance scaled(double c) const;
  /// Distribution of a * lhs + b * rhs for independent lhs, rhs.
  static Disturbance combine(double a, const Disturbance& lhs, double b, const Disturbance& rhs);

  friend bool operator==(const Disturbance&, const Disturbance&);

 private:
  Disturbance(Family f, std::vector<double> p) : family_(f), params_(std::move(p)) {}

  Family family_;
  std::vector<double> params_;
  std::vector<Term> terms_;
};

struct Term {
  double coef = 1.0;
  Disturbance dist;

  friend bool operator==(const Term& a, const Term& b) {
    return a.coef == b.coef && a.dist == b.dist;
  }
};

inline bool operator==(const Disturbance& a, const Disturbance& b) {
  return a.family_ == b.family_ && a.params_ == b.params_ && a.terms_ == b.terms_;
}

inline Disturbance Disturbance::gaussian_mixture(const std::vector<double>& weights,
                                                 const std::vector<double>& means,
                                                 const std::vector<double>& variances) {
  if (weights.size() != means.size() || weights.size() != variances.size())
    fail(ErrorCode::invalid_input, "gaussian-mixture component arrays differ in length");
  std::vector<double> p;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    p.push_back(weights[i]);
    p.push_back(means[i]);
    p.push_back(variances[i]);
  }
  return {Family::gaussian_mixture, std::move(p)};
}

inline Disturbance Disturbance::weighted_sum(std::vector<Term> terms) {
  // Flatten nested sums and fold a lone unit term away.
  std::vector<Term> flat;
  for (auto& t : terms) {
    if (t.coef == 0.0) continue;
    if (t.dist.family_ == Family::weighted_sum) {
      for (const auto& inner : t.dist.terms_) flat.push_back({t.coef * inner.coef, inner.dist});
    } else {
      flat.push_back(std::move(t));
    }
  }
  if (flat.size() == 1 && flat[0].coef == 1.0) return flat[0].dist;
  Disturbance d(Family::weighted_sum, {});
  d.terms_ = std::move(flat);
  return d;
}

inline Disturbance Disturbance::from_parts(Family family, std::vector<double> params,
                                           std::vector<Term> terms) {
  if (family == Family::weighted_sum) return weighted_sum(std::move(terms));
  return {family, std::move(params)};
}

inline Disturbance Disturbance::scaled(double c) const {
  if (c == 1.0) return *this;
  return weighted_sum({Term{c, *this}});
}

inline Disturbance Disturbance::combine(double a, const Disturbance& lhs, double b,
                                        const Disturbance& rhs) {
  return weighted_sum({Term{a, lhs}, Term{b, rhs}});
}

inline Cumulants Disturbance::cumulants() const {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  switch (family_) {
    case Family::laplace: {
      const double b2 = params_[0] * params_[0];
      return {2 * b2, 0, 12 * b2 * b2};
    }
    case Family::uniform: {
      const double a2 = params_[0] * params_[0];
      return {a2 / 3, 0, -2 * a2 * a2 / 15};
    }
    case Family::generalized_gaussian: {
      const double beta = params_[0], alpha = params_[1];
      const double g1 = std::tgamma(1 / beta);
      const double m2 = alpha * alpha * std::tgamma(3 / beta) / g1;
      const double m4 = std::pow(alpha, 4) * std::tgamma(5 / beta) / g1;
      return {m2, 0, m4 - 3 * m2 * m2};
    }
    case Family::gaussian_mixture: {
      double m2 = 0, m3 = 0, m4 = 0;
      for (std::size_t i = 0; i + 2 < params_.size(); i += 3) {
        const double w = params_[i], mu = params_[i + 1], v = params_[i + 2];
        m2 += w * (mu * mu + v);
        m3 += w * (mu * mu * mu + 3 * mu * v);
        m4 += w * (std::pow(mu, 4) + 6 * mu * mu * v + 3 * v * v);
      }
      return {m2, m3, m4 - 3 * m2 * m2};
    }
    case Family::weighted_sum: {
      Cumulants c{0, 0, 0};
      for (const auto& t : terms_) {
        const auto k = t.dist.cumulants();
        const double c2 = t.coef * t.coef;
        c.k2 += c2 * k.k2;
        c.k3 += c2 * t.coef * k.k3;
        c.k4 += c2 * c2 * k.k4;
      }
      return c;
    }
    case Family::unknown:
      return {params_.at(0), nan, nan};
  }
  return {nan, nan, nan};
}

inline double Disturbance::variance() const { return cumulants().k2; }

inline bool Disturbance::shape_known() const {
  if (family_ == Family::unknown) return false;
  if (family_ == Family::weighted_sum)
    return std::all_of(terms_.begin(), terms_.end(),
                       [](const Term& t) { return t.dist.shape_known(); });
  return true;
}

inline bool Disturbance::symmetric() const {
  switch (family_) {
    case Family::laplace:
    case Family::uniform:
    case Family::generalized_gaussian:
      return true;
    case Family::gaussian_mixture: {
      // Every component must have a mirror image of equal weight and variance.
      const std::size_t k = params_.size() / 3;
      std::vector<bool> used(k, false);
      for (std::size_t i = 0; i < k; ++i) {
        if (used[i]) continue;
        bool found = false;
        for (std::size_t j = i; j < k && !found; ++j) {
          if (used[j] && j != i) continue;
          if (params_[3 * i] == params_[3 * j] && params_[3 * i + 1] == -params_[3 * j + 1] &&
              params_[3 * i + 2] == params_[3 * j + 2]) {
            used[i] = used[j] = true;
            found = true;
          }
        }
        if (!found) return false;
      }
      return true;
    }
    case Family::weighted_sum:
      return std::all_of(terms_.begin(), terms_.end(),
                         [](const Term& t) { return t.dist.symmetric(); });
    case Family::unknown:
      return false;
  }
  return false;
}

inline bool Disturbance::is_gaussian() const {
  switch (family_) {
    case Family::generalized_gaussian:
      return params_.size() == 2 && params_[0] == 2.0;
    case Family::gaussian_mixture: {
      // All components share mean and variance.
      for (std::size_t i = 3; i + 2 < params_.size(); i += 3)
        if (params_[i + 1] != params_[1] || params_[i + 2] != params_[2]) return false;
      return true;
    }
    case Family::weighted_sum:
      return std::all_of(terms_.begin(), terms_.end(),
                         [](const Term& t) { return t.dist.is_gaussian(); });
    default:
      return false;
  }
}

inline std::vector<std::string> Disturbance::problems() const {
  std::vector<std::string> out;
  auto need = [&](std::size_t n) {
    if (params_.size() != n) {
      out.push_back(std::string(to_string(family_)) + " expects " + std::to_string(n) +
                    " parameter(s)");
      return false;
    }
    return true;
  };
  switch (family_) {
    case Family::laplace:
    case Family::uniform:
      if (need(1) && !(params_[0] > 0)) out.push_back("scale must be positive");
      break;
    case Family::generalized_gaussian:
      if (need(2) && !(params_[0] > 0 && params_[1] > 0))
        out.push_back("shape and scale must be positive");
      break;
    case Family::gaussian_mixture: {
      if (params_.empty() || params_.size() % 3 != 0) {
        out.push_back("gaussian-mixture expects (weight, mean, variance) triples");
        break;
      }
      double wsum = 0, mean = 0;
      for (std::size_t i = 0; i < params_.size(); i += 3) {
        if (!(params_[i] >= 0)) out.push_back("mixture weight must be non-negative");
        if (!(params_[i + 2] > 0)) out.push_back("mixture variance must be positive");
        wsum += params_[i];
        mean += params_[i] * params_[i + 1];
      }
      if (std::abs(wsum - 1) > 1e-9) out.push_back("mixture weights must sum to 1");
      if (std::abs(mean) > 1e-9) out.push_back("mixture must have zero mean");
      break;
    }
    case Family::weighted_sum:
      if (terms_.empty()) out.push_back("weighted-sum has no terms");
      for (const auto& t : terms_) {
        if (!std::isfinite(t.coef)) out.push_back("weighted-sum coefficient is not finite");
        for (auto& p : t.dist.problems()) out.push_back(p);
      }
      break;
    case Family::unknown:
      if (need(1) && !(params_[0] > 0)) out.push_back("variance must be positive");
      break;
  }
  return out;
}

inline double Disturbance::sample(Engine& eng) const {
  switch (family_) {
    case Family::laplace: {
      // difference of two exponentials
      std::exponential_distribution<double> ex(1.0);
      return params_[0] * (ex(eng) - ex(eng));
    }
    case Family::uniform:
      return lvlingam::uniform(eng, -params_[0], params_[0]);
    case Family::generalized_gaussian: {
      const double beta = params_[0], alpha = params_[1];
      std::gamma_distribution<double> g(1 / beta, 1.0);
      const double mag = alpha * std::pow(g(eng), 1 / beta);
      return coin(eng, 0.5) ? mag : -mag;
    }
    case Family::gaussian_mixture: {
      std::vector<double> w;
      for (std::size_t i = 0; i < params_.size(); i += 3) w.push_back(params_[i]);
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      const std::size_t k = pick(eng);
      return params_[3 * k + 1] + std::sqrt(params_[3 * k + 2]) * standard_normal(eng);
    }
    case Family::weighted_sum: {
      double s = 0;
      for (const auto& t : terms_) s += t.coef * t.dist.sample(eng);
      return s;
    }
    case Family::unknown:
      fail(ErrorCode::invalid_input, "cannot sample a disturbance of unknown shape");
  }
  return 0;
}

/// Two-component zero-mean mixture with the requested variance; `separation`
/// in [0, 1) sets the share of variance carried by the component means.
inline Disturbance bimodal_mixture(double weight, double separation, double variance) {
  const double w1 = weight, w2 = 1 - weight;
  // means chosen so w1*m1 + w2*m2 = 0 and between-component variance = separation
  const double d = std::sqrt(separation / (w1 * w2));
  const double m1 = d * w2, m2 = -d * w1;
  const double v = 1 - separation;
  const double s = std::sqrt(variance);
  return Disturbance::gaussian_mixture({w1, w2}, {m1 * s, m2 * s}, {v * variance, v * variance});
}

}  // namespace lvlingam
