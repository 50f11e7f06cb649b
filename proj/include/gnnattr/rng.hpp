#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "gnnattr/errors.hpp"

namespace gnnattr {

/// One SplitMix64 step. Used to derive independent child seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Child seed for (seed, stream). Distinct streams give independent
/// generators, so per-instance work can run in any order or in parallel
/// without changing results.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ull * (stream + 1);
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x1000193);
}

/// mt19937_64 with hand-rolled distributions. std::uniform_*_distribution is
/// implementation-defined, so sampling goes through fixed formulas to keep
/// streams identical for a given seed on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform on {0, ..., n-1}, unbiased via bitmask rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("Rng::below requires n >= 1");
    std::uint64_t mask = ~0ull >> std::countl_zero(n | 1ull);
    for (;;) {
      std::uint64_t r = gen_() & mask;
      if (r < n) return r;
    }
  }

  /// Uniform on {lo, ..., hi} inclusive.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw ArgumentError("Rng::uniform_int requires lo <= hi");
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi) - lo + 1));
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTau = 6.283185307179586476925286766559;
    double a = kTau * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// k distinct values from {0, ..., n-1} by partial Fisher-Yates.
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw ArgumentError("sample_without_replacement requires 0 <= k <= n");
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
      std::size_t j = static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gnnattr
