// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vt {

// Activations and parameters are row-major: rows index time (or batch),
// columns index features.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Error taxonomy; the CLI maps these to exit codes (usage 2, data 3, numeric 4).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(double a, double b, double c) {
  return log_sum_exp(log_sum_exp(a, b), c);
}

// splitmix64 finalizer; used for seed derivation.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic RNG wrapping std::mt19937_64. Sampling algorithms are fixed
// here rather than delegated to std:: distributions, whose output differs
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed), seed_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    const uint64_t n = static_cast<uint64_t>(hi - lo) + 1;
    const auto wide = static_cast<unsigned __int128>(eng_()) * n;
    return lo + static_cast<int>(wide >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent substream derived from the original seed, not from consumed
  // state, so forked streams are stable under reordering.
  Rng fork(uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream + 1))); }

  uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 eng_;
  uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vt
