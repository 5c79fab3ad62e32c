// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VAENMF_COMMON_H_
#define VAENMF_COMMON_H_

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vaenmf {

// Frames are stored as columns throughout: spectrograms are F x T,
// latent matrices are D x T.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input detected before any work is done (maps to CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Stable 64-bit FNV-1a hash, used to derive per-item seeds from ids.
inline uint64_t Fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Derives an independent stream seed from a base seed and any number of
// integer salts (splitmix64 finalizer applied after each mix).
inline uint64_t Mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename... Salts>
uint64_t DeriveSeed(uint64_t seed, Salts... salts) {
  uint64_t h = Mix64(seed);
  ((h = Mix64(h ^ static_cast<uint64_t>(salts))), ...);
  return h;
}

// Standard normal draws with a fixed algorithm (Box-Muller on 53-bit
// uniforms), so sampled values do not depend on the standard library.
class NormalSampler {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = Uniform(rng), u2 = Uniform(rng);
    while (u1 <= 0.0) u1 = Uniform(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  static double Uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fills a matrix with i.i.d. standard normal draws, column by column.
inline Matrix RandomNormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  NormalSampler normal;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace vaenmf

#endif  // VAENMF_COMMON_H_
