// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Shared helpers for the unit tests: scratch directories and independent
// reference computations written without the library's code paths.

#ifndef VAENMF_TESTS_TEST_SUPPORT_H_
#define VAENMF_TESTS_TEST_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "vaenmf/common.h"
#include "vaenmf/dsp.h"
#include "vaenmf/vae.h"

namespace vaenmf::testing {

inline constexpr double kPi = 3.14159265358979323846;

// A fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vaenmf_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string ReadBytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline WaveformBuffer RandomSignal(size_t n, uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  WaveformBuffer w;
  w.samples.resize(n);
  for (double& v : w.samples) v = normal(rng);
  return w;
}

inline WaveformBuffer Sine(double freq, int rate, size_t n, double amp = 0.5,
                           double phase = 0.0) {
  WaveformBuffer w;
  w.sample_rate_hz = rate;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / rate + phase);
  return w;
}

// O(N^2) DFT bin k of x.
inline std::complex<double> DirectDft(const std::vector<double>& x, size_t k) {
  std::complex<long double> acc = 0.0L;
  const long double n = static_cast<long double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const long double a = -2.0L * 3.141592653589793238462643383279L *
                          static_cast<long double>(k * i % x.size()) / n;
    acc += static_cast<long double>(x[i]) * std::complex<long double>(std::cos(a), std::sin(a));
  }
  return {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
}

// Least-squares amplitude of a sinusoid at `freq` over samples [lo, hi).
inline double ToneAmplitude(const WaveformBuffer& w, double freq, size_t lo, size_t hi) {
  long double cc = 0, ss = 0, cs = 0, xc = 0, xs = 0;
  for (size_t i = lo; i < hi; ++i) {
    const long double a = 2.0L * kPi * freq * static_cast<long double>(i) / w.sample_rate_hz;
    const long double c = std::cos(a), s = std::sin(a), x = w.samples[i];
    cc += c * c;
    ss += s * s;
    cs += c * s;
    xc += x * c;
    xs += x * s;
  }
  const long double det = cc * ss - cs * cs;
  const long double a = (xc * ss - xs * cs) / det;
  const long double b = (xs * cc - xc * cs) / det;
  return static_cast<double>(std::sqrt(a * a + b * b));
}

inline double MaxRelDiff(const Matrix& a, const Matrix& b) {
  return ((a - b).array().abs() / b.array().abs().max(1e-300)).maxCoeff();
}

// Relative error of the analytic gradient against central differences, per
// layer block (weights and bias together).
std::array<double, 5> GradientErrors(const VaeParams& params, const Matrix& x,
                                     const Matrix& noise, ElboTerms terms = {}) {
  const ElboResult analytic = ElboLoss(params, x, noise, terms);
  const double h = 1e-5;
  std::array<double, 5> errors{};
  VaeParams probe = params;
  for (size_t l = 0; l < 5; ++l) {
    DenseLayer* layer = probe.layers()[l];
    const DenseLayer* grad = analytic.gradient.layers()[l];
    double diff2 = 0.0, num2 = 0.0, ana2 = 0.0;
    auto visit = [&](double& v, double g) {
      const double keep = v;
      v = keep + h;
      const double up = ElboValue(probe, x, noise, terms);
      v = keep - h;
      const double down = ElboValue(probe, x, noise, terms);
      v = keep;
      const double fd = (up - down) / (2.0 * h);
      diff2 += (fd - g) * (fd - g);
      num2 += fd * fd;
      ana2 += g * g;
    };
    for (Eigen::Index i = 0; i < layer->weight.size(); ++i)
      visit(layer->weight.data()[i], grad->weight.data()[i]);
    for (Eigen::Index i = 0; i < layer->bias.size(); ++i)
      visit(layer->bias.data()[i], grad->bias.data()[i]);
    errors[l] = std::sqrt(diff2) / std::max(std::sqrt(std::max(num2, ana2)), 1e-300);
  }
  return errors;
}

}  // namespace vaenmf::testing

#endif  // VAENMF_TESTS_TEST_SUPPORT_H_
