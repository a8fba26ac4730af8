#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tem4ctr {

// Error taxonomy shared by all modules. Everything user-facing derives from
// Error so the CLI can map any failure onto a single runtime exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error { public: using Error::Error; };
class SchemaError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class VocabError : public Error { public: using Error::Error; };
class IntegrityError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class MetricError : public Error { public: using Error::Error; };

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic RNG. mt19937_64 is standardized, but the std distributions
// are not, so all draws go through hand-rolled helpers to keep output stable
// across standard libraries. The (seed, stream) pair selects a decorrelated
// substream, which lets per-user work stay order independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ (0xd1b54a32d192ed03ull * (stream + 1));
    std::uint64_t a = detail::splitmix64(s);
    std::uint64_t b = detail::splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, n). Lemire multiply-shift; the O(n / 2^64) bias is far
  // below anything observable at our scales.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal via Box-Muller, caching the second deviate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // In-place Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace tem4ctr
