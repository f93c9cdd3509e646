#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepssm {

using Vec = std::vector<double>;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operand shapes incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Mathematically invalid input (log/sqrt of a negative value, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up in a forward value or a gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or API misuse.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// File / parsing problems.
class IoError : public Error {
 public:
  using Error::Error;
};

/// splitmix64 mix step; used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for logical stream `stream` of master seed `master`.
/// Streams are stable across runs and independent of execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix_seed(master ^ mix_seed(stream));
}

/// Seeded random source. All randomness in the library flows through this
/// type so that (seed, config) reproduces runs exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  void fill_normal(Vec& v) {
    for (double& x : v) x = normal();
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace deepssm
