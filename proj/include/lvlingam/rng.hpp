#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace lvlingam {

using Engine = std::mt19937_64;

// A named seed. Child seeds are derived by hashing the parent together with a
// stream index, so independent consumers (trials, variables, restarts) never
// share a sequence and results do not depend on evaluation order.
class Seed {
 public:
  constexpr Seed() = default;
  constexpr explicit Seed(std::uint64_t value) : value_(value) {}

  std::uint64_t value() const noexcept { return value_; }

  Seed split(std::uint64_t stream) const noexcept {
    return Seed(mix(value_ ^ mix(stream + 0x632be59bd9b4e019ULL)));
  }

  Seed split(std::initializer_list<std::uint64_t> path) const noexcept {
    Seed s = *this;
    for (auto p : path) s = s.split(p);
    return s;
  }

  Engine engine() const {
    std::seed_seq seq{static_cast<std::uint32_t>(value_),
                      static_cast<std::uint32_t>(value_ >> 32)};
    return Engine(seq);
  }

 private:
  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t value_ = 0;
};

inline double uniform(Engine& eng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(eng);
}

inline double standard_normal(Engine& eng) {
  return std::normal_distribution<double>(0.0, 1.0)(eng);
}

inline bool coin(Engine& eng, double p) {
  return std::bernoulli_distribution(p)(eng);
}

template <class T>
void shuffle(std::vector<T>& v, Engine& eng) {
  std::shuffle(v.begin(), v.end(), eng);
}

}  // namespace lvlingam
